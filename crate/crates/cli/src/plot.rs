//! Static SVG figures.

use std::fmt::Write as _;

use anyhow::{bail, Result};

const W: f64 = 480.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;

fn header(title: &str) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}">
<title>{}</title>
<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#,
        escape(title)
    )
    .unwrap();
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }

    fn axes(&self, s: &mut String, xlabel: &str, ylabel: &str) {
        let (l, r, t, b) = (PAD, W - PAD, PAD, H - PAD);
        writeln!(
            s,
            r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            r - l,
            b - t
        )
        .unwrap();
        for i in 0..=4 {
            let fx = self.x0 + (self.x1 - self.x0) * i as f64 / 4.0;
            let fy = self.y0 + (self.y1 - self.y0) * i as f64 / 4.0;
            let (gx, gy) = (self.px(fx), self.py(fy));
            writeln!(
                s,
                r#"<text x="{gx:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
                b + 14.0,
                tick(fx)
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{}</text>"#,
                l - 4.0,
                gy + 3.0,
                tick(fy)
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#,
            W / 2.0,
            H - 12.0,
            escape(xlabel)
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="14" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(ylabel)
        )
        .unwrap();
    }
}

fn tick(v: f64) -> String {
    let r = (v * 1000.0).round() / 1000.0;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

fn legend(s: &mut String, items: &[(&str, &str)]) {
    for (i, (label, color)) in items.iter().enumerate() {
        let y = PAD - 30.0 + 12.0 * i as f64;
        writeln!(s, r#"<circle cx="{:.1}" cy="{y:.1}" r="3" fill="{color}"/>"#, PAD + 5.0).unwrap();
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="10">{}</text>"#,
            PAD + 12.0,
            y + 3.0,
            escape(label)
        )
        .unwrap();
    }
}

/// 2-D scatter of dataset, proxy-free and guided designs over banded oracle
/// level sets on the box `[lo, hi]²`.
pub fn fig1(
    oracle: impl Fn(&[f64]) -> f64,
    lo: f64,
    hi: f64,
    initial: &[Vec<f64>],
    baseline: &[Vec<f64>],
    guided: &[Vec<f64>],
) -> Result<String> {
    if guided.is_empty() || baseline.is_empty() {
        bail!("fig1 needs nonempty guided and baseline candidate sets");
    }
    if let Some(p) = initial.iter().chain(baseline).chain(guided).find(|p| p.len() != 2) {
        bail!("fig1 needs two-dimensional designs, got {} coordinates", p.len());
    }
    let f = Frame {
        x0: lo,
        x1: hi,
        y0: lo,
        y1: hi,
    };
    let mut s = header("Oracle level sets with dataset, proxy-free and guided designs");
    let cells = 48;
    let step = (hi - lo) / cells as f64;
    let (cw, ch) = ((W - 2.0 * PAD) / cells as f64, (H - 2.0 * PAD) / cells as f64);
    for i in 0..cells {
        for j in 0..cells {
            let x = [lo + (i as f64 + 0.5) * step, lo + (j as f64 + 0.5) * step];
            let band = (1.0 - oracle(&x)).log10().clamp(0.0, 4.0).floor() as usize;
            let shade = ["#fde725", "#7ad151", "#22a884", "#2a788e", "#414487"][band.min(4)];
            writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{shade}" fill-opacity="0.35"/>"#,
                f.px(x[0] - 0.5 * step),
                f.py(x[1] + 0.5 * step),
                cw + 0.05,
                ch + 0.05
            )
            .unwrap();
        }
    }
    let stride = (initial.len() / 400).max(1);
    for p in initial.iter().step_by(stride) {
        writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="1.5" fill="#7f7f7f"/>"##,
            f.px(p[0]),
            f.py(p[1])
        )
        .unwrap();
    }
    for (pts, color) in [(baseline, "#1f77b4"), (guided, "#d62728")] {
        for p in pts {
            let (x, y) = (f.px(p[0].clamp(lo, hi)), f.py(p[1].clamp(lo, hi)));
            writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{color}"/>"#).unwrap();
        }
    }
    f.axes(&mut s, "x1", "x2");
    legend(
        &mut s,
        &[("dataset", "#7f7f7f"), ("proxy-free", "#1f77b4"), ("guided", "#d62728")],
    );
    s.push_str("</svg>\n");
    Ok(s)
}

/// ω/ω₀ against reverse step: every chain faintly, their mean in bold.
pub fn fig4(trajectories: &[Vec<f64>], omega0: f64) -> Result<String> {
    if trajectories.is_empty() || trajectories[0].is_empty() {
        bail!("fig4 needs at least one non-empty ω trajectory");
    }
    if omega0 == 0.0 {
        bail!("ω₀ = 0 leaves the ratio undefined");
    }
    let t = trajectories[0].len();
    if trajectories.iter().any(|r| r.len() != t) {
        bail!("ω trajectories have different lengths");
    }
    let ratios: Vec<Vec<f64>> = trajectories
        .iter()
        .map(|r| r.iter().map(|w| w / omega0).collect())
        .collect();
    let mean: Vec<f64> = (0..t)
        .map(|i| ratios.iter().map(|r| r[i]).sum::<f64>() / ratios.len() as f64)
        .collect();
    let (mut lo, mut hi) = ratios
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(lo.is_finite() && hi.is_finite()) {
        bail!("non-finite ω in trajectories");
    }
    let pad = ((hi - lo) * 0.1).max(0.05);
    lo -= pad;
    hi += pad;
    let f = Frame {
        x0: 1.0,
        x1: t.max(2) as f64,
        y0: lo,
        y1: hi,
    };
    let mut s = header("Strength ratio over reverse steps");
    let path = |r: &[f64]| -> String {
        r.iter()
            .enumerate()
            .map(|(i, v)| {
                format!(
                    "{}{:.2},{:.2}",
                    if i == 0 { "M" } else { " L" },
                    f.px((i + 1) as f64),
                    f.py(*v)
                )
            })
            .collect()
    };
    for r in ratios.iter().take(32) {
        writeln!(
            s,
            r##"<path d="{}" fill="none" stroke="#1f77b4" stroke-opacity="0.25" stroke-width="0.8"/>"##,
            path(r)
        )
        .unwrap();
    }
    writeln!(
        s,
        r##"<path d="{}" fill="none" stroke="#d62728" stroke-width="2"/>"##,
        path(&mean)
    )
    .unwrap();
    f.axes(&mut s, "reverse step", "omega / omega0");
    legend(&mut s, &[("chains", "#1f77b4"), ("mean", "#d62728")]);
    s.push_str("</svg>\n");
    Ok(s)
}
