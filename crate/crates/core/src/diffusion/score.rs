use serde::{Deserialize, Serialize};

use super::schedule::VpSchedule;
use crate::nn::dual::{self, Dual};
use crate::nn::{Activation, Mlp};

/// A time-dependent score `s(x, t, y)`; `condition = None` selects the
/// unconditional mode.
///
/// Only [`ScoreModel::score_dual`] is required. The other methods derive from
/// it and exist so implementations backed by a network can use faster paths.
pub trait ScoreModel: Sync {
    fn dim(&self) -> usize;

    fn score_dual(&self, x: &[Dual], t: f64, condition: Option<f64>) -> Vec<Dual>;

    fn score(&self, x: &[f64], t: f64, condition: Option<f64>) -> Vec<f64> {
        dual::unzip(&self.score_dual(&dual::constants(x), t, condition)).0
    }

    /// Value plus one Jacobian-vector product per row of `tangents`
    /// (`k × dim`, row-major).
    fn score_jvps(&self, x: &[f64], t: f64, condition: Option<f64>, tangents: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut value = Vec::new();
        let mut out = Vec::with_capacity(tangents.len());
        for v in tangents.chunks(d) {
            let (val, tan) = dual::unzip(&self.score_dual(&dual::zip(x, v), t, condition));
            value = val;
            out.extend(tan);
        }
        if tangents.is_empty() {
            value = self.score(x, t, condition);
        }
        (value, out)
    }

    /// Vector-Jacobian product `cotangentᵀ ∂s/∂x`.
    fn score_vjp(&self, x: &[f64], t: f64, condition: Option<f64>, cotangent: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut basis = vec![0.0; d * d];
        for i in 0..d {
            basis[i * d + i] = 1.0;
        }
        let (_, jac_cols) = self.score_jvps(x, t, condition, &basis);
        (0..d)
            .map(|i| {
                jac_cols[i * d..(i + 1) * d]
                    .iter()
                    .zip(cotangent)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

/// Exact score of Gaussian data `N(mean, var·I)` under a VP schedule:
/// `p_t = N(μ(t)·mean, (μ(t)²var + σ(t)²)I)`. The condition is ignored.
#[derive(Debug, Clone)]
pub struct GaussianDataScore {
    pub schedule: VpSchedule,
    pub mean: Vec<f64>,
    pub var: f64,
}

impl GaussianDataScore {
    pub fn standard(schedule: VpSchedule, dim: usize) -> Self {
        GaussianDataScore {
            schedule,
            mean: vec![0.0; dim],
            var: 1.0,
        }
    }

    /// Delta data at `point` (the `var → 0` limit).
    pub fn delta(schedule: VpSchedule, point: Vec<f64>) -> Self {
        GaussianDataScore {
            schedule,
            mean: point,
            var: 0.0,
        }
    }
}

impl ScoreModel for GaussianDataScore {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn score_dual(&self, x: &[Dual], t: f64, _condition: Option<f64>) -> Vec<Dual> {
        let m = self.schedule.mean_coef(t);
        let v = m * m * self.var + self.schedule.variance(t);
        x.iter()
            .zip(&self.mean)
            .map(|(&xi, &c)| (xi - m * c) * (-1.0 / v))
            .collect()
    }
}

/// Condition and time-aware score network.
///
/// Input features are `[x; y_scaled; null_flag; sin(f·t); cos(f·t)]` and the
/// network predicts the injected noise, so `s = -net(features) / σ(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreNet {
    pub net: Mlp,
    pub schedule: VpSchedule,
    pub freqs: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
    dim: usize,
}

/// Everything besides the weights that a score checkpoint must carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreNetMeta {
    pub dim: usize,
    pub schedule: VpSchedule,
    pub freqs: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

/// `count` frequencies log-spaced over `[lo, hi]`.
pub fn log_spaced(count: usize, lo: f64, hi: f64) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

impl ScoreNet {
    pub fn new(
        dim: usize,
        hidden: &[usize],
        n_freqs: usize,
        schedule: VpSchedule,
        y_stats: (f64, f64),
        seed: u64,
    ) -> Self {
        let freqs = log_spaced(n_freqs, 1.0, 100.0);
        let mut sizes = vec![dim + 2 + 2 * n_freqs];
        sizes.extend_from_slice(hidden);
        sizes.push(dim);
        ScoreNet {
            net: Mlp::new(&sizes, Activation::Silu, seed),
            schedule,
            freqs,
            y_mean: y_stats.0,
            y_std: if y_stats.1 > 0.0 { y_stats.1 } else { 1.0 },
            dim,
        }
    }

    pub fn from_parts(net: Mlp, meta: ScoreNetMeta) -> Self {
        assert_eq!(net.output_dim(), meta.dim, "score net output must equal design dim");
        assert_eq!(
            net.input_dim(),
            meta.dim + 2 + 2 * meta.freqs.len(),
            "score net input width does not match feature layout"
        );
        ScoreNet {
            net,
            schedule: meta.schedule,
            freqs: meta.freqs,
            y_mean: meta.y_mean,
            y_std: meta.y_std,
            dim: meta.dim,
        }
    }

    pub fn meta(&self) -> ScoreNetMeta {
        ScoreNetMeta {
            dim: self.dim,
            schedule: self.schedule,
            freqs: self.freqs.clone(),
            y_mean: self.y_mean,
            y_std: self.y_std,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.net.input_dim()
    }

    /// Zeroes the output layer so the initial score is identically zero.
    pub fn zero_output_layer(&mut self) {
        let last = self.net.num_layers() - 1;
        self.net.zero_layer(last);
    }

    pub fn scale_condition(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_std
    }

    /// Writes the non-design features for `(t, condition)` into `out`.
    pub(crate) fn write_context(&self, t: f64, condition: Option<f64>, out: &mut [f64]) {
        let (y, flag) = match condition {
            Some(y) => (self.scale_condition(y), 0.0),
            None => (0.0, 1.0),
        };
        out[0] = y;
        out[1] = flag;
        let nf = self.freqs.len();
        for (i, f) in self.freqs.iter().enumerate() {
            let (s, c) = (f * t).sin_cos();
            out[2 + i] = s;
            out[2 + nf + i] = c;
        }
    }

    pub fn features(&self, x: &[f64], t: f64, condition: Option<f64>) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "design dimension mismatch");
        let mut f = vec![0.0; self.feature_dim()];
        f[..self.dim].copy_from_slice(x);
        self.write_context(t, condition, &mut f[self.dim..]);
        f
    }
}

impl ScoreModel for ScoreNet {
    fn dim(&self) -> usize {
        self.dim
    }

    fn score(&self, x: &[f64], t: f64, condition: Option<f64>) -> Vec<f64> {
        let scale = -1.0 / self.schedule.std(t);
        let mut out = self.net.forward(&self.features(x, t, condition));
        out.iter_mut().for_each(|v| *v *= scale);
        out
    }

    fn score_dual(&self, x: &[Dual], t: f64, condition: Option<f64>) -> Vec<Dual> {
        assert_eq!(x.len(), self.dim, "design dimension mismatch");
        let mut ctx = vec![0.0; self.feature_dim() - self.dim];
        self.write_context(t, condition, &mut ctx);
        let mut input = x.to_vec();
        input.extend(ctx.into_iter().map(Dual::constant));
        let scale = -1.0 / self.schedule.std(t);
        self.net
            .forward_dual(&input)
            .into_iter()
            .map(|d| d.scale(scale))
            .collect()
    }

    fn score_jvps(&self, x: &[f64], t: f64, condition: Option<f64>, tangents: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let width = self.feature_dim();
        let k = tangents.len() / d;
        let mut block = vec![0.0; k * width];
        for (row, v) in block.chunks_mut(width).zip(tangents.chunks(d)) {
            row[..d].copy_from_slice(v);
        }
        let scale = -1.0 / self.schedule.std(t);
        let (mut value, mut tan) = self.net.jvp_multi(&self.features(x, t, condition), &block);
        value.iter_mut().for_each(|v| *v *= scale);
        tan.iter_mut().for_each(|v| *v *= scale);
        (value, tan)
    }

    fn score_vjp(&self, x: &[f64], t: f64, condition: Option<f64>, cotangent: &[f64]) -> Vec<f64> {
        let scale = -1.0 / self.schedule.std(t);
        let cot: Vec<f64> = cotangent.iter().map(|c| c * scale).collect();
        let grad = self.net.input_gradient(&self.features(x, t, condition), &cot);
        grad[..self.dim].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net() -> ScoreNet {
        ScoreNet::new(3, &[16, 16], 4, VpSchedule::default(), (2.0, 4.0), 7)
    }

    #[test]
    fn null_flag_hides_condition() {
        let n = net();
        let f = n.features(&[0.1, 0.2, 0.3], 0.5, None);
        assert_eq!(f[3], 0.0);
        assert_eq!(f[4], 1.0);
        let f = n.features(&[0.1, 0.2, 0.3], 0.5, Some(6.0));
        assert_eq!(f[3], 1.0);
        assert_eq!(f[4], 0.0);
    }

    #[test]
    fn score_is_pure_and_shaped() {
        let n = net();
        let x = [0.4, -0.2, 1.0];
        let a = n.score(&x, 0.3, Some(2.0));
        assert_eq!(a, n.score(&x, 0.3, Some(2.0)));
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|v| v.is_finite()));
        let u = n.score(&x, 0.3, None);
        assert!(u.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_output_layer_gives_zero_score() {
        let mut n = net();
        n.zero_output_layer();
        assert!(n.score(&[1.0, 2.0, 3.0], 0.7, Some(1.0)).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fast_paths_agree_with_dual_path() {
        let n = net();
        let x = [0.4, -0.2, 1.0];
        let v = [0.3, 1.0, -0.5];
        let (val, tan) = n.score_jvps(&x, 0.4, Some(1.0), &v);
        let dual = n.score_dual(&dual::zip(&x, &v), 0.4, Some(1.0));
        for j in 0..3 {
            assert!((val[j] - dual[j].v).abs() < 1e-12);
            assert!((tan[j] - dual[j].t).abs() < 1e-12);
        }
        let cot = [1.0, -2.0, 0.5];
        let vjp = n.score_vjp(&x, 0.4, Some(1.0), &cot);
        let generic: Vec<f64> = {
            // default trait path via basis jvps
            let d = 3;
            let mut basis = vec![0.0; 9];
            for i in 0..d {
                basis[i * d + i] = 1.0;
            }
            let (_, cols) = n.score_jvps(&x, 0.4, Some(1.0), &basis);
            (0..d).map(|i| (0..d).map(|j| cols[i * d + j] * cot[j]).sum()).collect()
        };
        for (a, b) in vjp.iter().zip(&generic) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn gaussian_score_matches_closed_form() {
        let s = VpSchedule::default();
        let g = GaussianDataScore::standard(s, 2);
        assert_eq!(g.score(&[0.5, -1.0], 0.3, None), vec![-0.5, 1.0]);
        let delta = GaussianDataScore::delta(s, vec![2.0]);
        let t = 0.4;
        let expect = -(1.0 - s.mean_coef(t) * 2.0) / s.variance(t);
        assert!((delta.score(&[1.0], t, None)[0] - expect).abs() < 1e-12);
    }
}
