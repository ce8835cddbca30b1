//! Stable file layout under the output directory and the readers/writers
//! for each artifact.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rgd_core::benchmark::{EvalReport, OfflineDataset};
use rgd_core::diffusion::{ScoreNet, ScoreNetMeta};
use rgd_core::nn::checkpoint;
use rgd_core::nn::AdamState;
use rgd_core::pipeline::{AblationRow, AdversarialRow};
use rgd_core::proxy::{ProxyMeta, ProxyModel};
use rgd_core::refinement::AlphaRecord;
use rgd_core::sampler::{Candidate, SamplerState};

pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn diffusion(&self) -> PathBuf {
        self.root.join("diffusion")
    }

    pub fn proxy(&self) -> PathBuf {
        self.root.join("proxy")
    }

    pub fn refined(&self) -> PathBuf {
        self.root.join("refined_proxy")
    }

    pub fn loss_csv(&self, which: &str) -> PathBuf {
        self.root.join(format!("{which}_loss.csv"))
    }

    pub fn candidates(&self, strategy: &str) -> PathBuf {
        self.root.join(format!("candidates_{strategy}.csv"))
    }

    pub fn omega(&self, strategy: &str) -> PathBuf {
        self.root.join(format!("omega_{strategy}.csv"))
    }

    pub fn eval_json(&self, strategy: &str) -> PathBuf {
        self.root.join(format!("eval_{strategy}.json"))
    }

    pub fn eval_csv(&self, strategy: &str) -> PathBuf {
        self.root.join(format!("eval_{strategy}.csv"))
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

pub fn load_dataset(layout: &Layout) -> Result<OfflineDataset> {
    let dir = layout.dataset();
    if !dir.join(rgd_core::benchmark::dataset::SIDECAR_FILE).exists() {
        bail!("no dataset in {}; run gen-data first", dir.display());
    }
    Ok(OfflineDataset::load(&dir)?)
}

pub fn save_score(dir: &Path, net: &ScoreNet, seed: u64, training: serde_json::Value, adam: &AdamState) -> Result<()> {
    checkpoint::save(
        dir,
        "score",
        &net.net,
        seed,
        training,
        serde_json::to_value(net.meta())?,
        Some(adam),
    )?;
    Ok(())
}

pub fn load_score(dir: &Path) -> Result<(ScoreNet, Option<AdamState>)> {
    if !dir.join("manifest.json").exists() {
        bail!(
            "no diffusion checkpoint in {}; run `train --which diffusion` first",
            dir.display()
        );
    }
    let ck = checkpoint::load(dir)?;
    if ck.manifest.kind != "score" {
        bail!(
            "{} holds a {:?} checkpoint, expected a score network",
            dir.display(),
            ck.manifest.kind
        );
    }
    let meta: ScoreNetMeta = serde_json::from_value(ck.manifest.extra.clone()).context("score checkpoint metadata")?;
    Ok((ScoreNet::from_parts(ck.net, meta), ck.optimizer))
}

pub fn save_proxy(
    dir: &Path,
    p: &ProxyModel,
    seed: u64,
    training: serde_json::Value,
    adam: Option<&AdamState>,
) -> Result<()> {
    checkpoint::save(
        dir,
        "proxy",
        &p.net,
        seed,
        training,
        serde_json::to_value(p.meta())?,
        adam,
    )?;
    Ok(())
}

pub fn load_proxy(dir: &Path) -> Result<(ProxyModel, Option<AdamState>)> {
    if !dir.join("manifest.json").exists() {
        bail!("no proxy checkpoint in {}", dir.display());
    }
    let ck = checkpoint::load(dir)?;
    if ck.manifest.kind != "proxy" {
        bail!(
            "{} holds a {:?} checkpoint, expected a proxy",
            dir.display(),
            ck.manifest.kind
        );
    }
    let meta: ProxyMeta = serde_json::from_value(ck.manifest.extra.clone()).context("proxy checkpoint metadata")?;
    Ok((ProxyModel::from_parts(ck.net, meta), ck.optimizer))
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))
}

pub fn write_losses(path: &Path, losses: &[(u64, f64)], append: bool) -> Result<()> {
    if append && path.exists() {
        let f = fs::OpenOptions::new().append(true).open(path)?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(f);
        for (s, l) in losses {
            w.write_record([s.to_string(), l.to_string()])?;
        }
        w.flush()?;
        return Ok(());
    }
    let mut w = writer(path)?;
    w.write_record(["step", "loss"])?;
    for (s, l) in losses {
        w.write_record([s.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_alpha(path: &Path, trace: &[AlphaRecord]) -> Result<()> {
    let mut w = writer(path)?;
    for r in trace {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_adversarial(path: &Path, rows: &[AdversarialRow]) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ablation(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "variant",
        "seed_group",
        "param",
        "value",
        "max",
        "median",
        "mean_raw",
        "error",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.variant.clone(),
            r.seed_group.to_string(),
            r.param.clone(),
            if r.value.is_nan() {
                String::new()
            } else {
                r.value.to_string()
            },
            opt(r.max),
            opt(r.median),
            opt(r.mean_raw),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Candidate rows: `chain, seed, final_omega, x0 … x{d-1}` in raw units.
pub fn write_candidates(path: &Path, chains: &[(usize, &Candidate)], designs: &[Vec<f64>]) -> Result<()> {
    let mut w = writer(path)?;
    let d = designs.first().map_or(0, Vec::len);
    let mut header = vec!["chain".to_string(), "seed".into(), "final_omega".into()];
    header.extend((0..d).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for ((i, c), x) in chains.iter().zip(designs) {
        let mut rec = vec![i.to_string(), c.seed.to_string(), c.final_omega.to_string()];
        rec.extend(x.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_candidates(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read candidates {}", path.display()))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let x = rec
            .iter()
            .skip(3)
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .with_context(|| format!("bad number in {}", path.display()))?;
        out.push(x);
    }
    Ok(out)
}

/// One row per chain: `chain, ω after step 1, …, ω after step T`.
pub fn write_omega(path: &Path, chains: &[(usize, &SamplerState)]) -> Result<()> {
    let mut w = writer(path)?;
    let t = chains.first().map_or(0, |c| c.1.omega_trajectory.len());
    let mut header = vec!["chain".to_string()];
    header.extend((1..=t).map(|i| format!("step{i}")));
    w.write_record(&header)?;
    for (i, s) in chains {
        let mut rec = vec![i.to_string()];
        rec.extend(s.omega_trajectory.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_omega(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("cannot read ω trajectories {}", path.display()))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()?;
        out.push(row);
    }
    Ok(out)
}

pub fn write_eval(json: &Path, table: &Path, rep: &EvalReport) -> Result<()> {
    #[derive(serde::Serialize)]
    struct Summary<'a> {
        count: usize,
        percentile_100: f64,
        percentile_50: f64,
        best_index: usize,
        y_min_ref: f64,
        y_max_true: f64,
        seed: u64,
        config_digest: &'a str,
    }
    let s = Summary {
        count: rep.count,
        percentile_100: rep.max,
        percentile_50: rep.median,
        best_index: rep.best_index,
        y_min_ref: rep.y_min_ref,
        y_max_true: rep.y_max_true,
        seed: rep.seed,
        config_digest: &rep.config_digest,
    };
    fs::write(json, serde_json::to_vec_pretty(&s)?)?;
    let mut w = writer(table)?;
    w.write_record(["index", "score", "normalized"])?;
    for (i, (s, n)) in rep.scores.iter().zip(&rep.normalized).enumerate() {
        w.write_record([i.to_string(), s.to_string(), n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
