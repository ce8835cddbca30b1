//! Gaussian proxy distribution `p(y|x) = N(J(x), σ(x)²)`, its likelihood
//! training, gradient ascent on the proxy mean, and the Tweedie lift of the
//! proxy to noisy diffusion states.

use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::DataView;
use crate::diffusion::{ScoreModel, VpSchedule};
use crate::error::{Result, RgdError};
use crate::nn::dual::{self, sigmoid, Dual};
use crate::nn::{Activation, AdamConfig, AdamOutcome, AdamState, Mlp};
use crate::rng;

/// Anything with a differentiable scalar prediction of a design's score.
pub trait ProxyMean: Sync {
    fn dim(&self) -> usize;

    fn predict_dual(&self, x: &[Dual]) -> Dual;

    fn predict(&self, x: &[f64]) -> f64 {
        self.predict_dual(&dual::constants(x)).v
    }

    /// `∇ₓ J(x)`.
    fn input_grad(&self, x: &[f64]) -> Vec<f64> {
        let mut e = vec![0.0; x.len()];
        (0..x.len())
            .map(|i| {
                e[i] = 1.0;
                let g = self.predict_dual(&dual::zip(x, &e)).t;
                e[i] = 0.0;
                g
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyModel {
    pub net: Mlp,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyMeta {
    pub dim: usize,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

pub const DEFAULT_LOG_STD_BOUNDS: (f64, f64) = (-5.0, 2.0);

impl ProxyModel {
    pub fn new(dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut sizes = vec![dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2);
        Self::from_net(Mlp::new(&sizes, Activation::Silu, seed))
    }

    pub fn from_net(net: Mlp) -> Self {
        assert_eq!(net.output_dim(), 2, "proxy network must output (mean, raw log-std)");
        ProxyModel {
            net,
            log_std_min: DEFAULT_LOG_STD_BOUNDS.0,
            log_std_max: DEFAULT_LOG_STD_BOUNDS.1,
        }
    }

    pub fn from_parts(net: Mlp, meta: ProxyMeta) -> Self {
        assert_eq!(net.input_dim(), meta.dim, "proxy input width mismatch");
        let mut p = Self::from_net(net);
        p.log_std_min = meta.log_std_min;
        p.log_std_max = meta.log_std_max;
        p
    }

    pub fn meta(&self) -> ProxyMeta {
        ProxyMeta {
            dim: self.net.input_dim(),
            log_std_min: self.log_std_min,
            log_std_max: self.log_std_max,
        }
    }

    /// Smooth squash of the raw output into `[log_std_min, log_std_max]`.
    fn squash(&self, raw: f64) -> (f64, f64) {
        let s = sigmoid(raw);
        let span = self.log_std_max - self.log_std_min;
        (self.log_std_min + span * s, span * s * (1.0 - s))
    }

    /// Proxy mean and log standard deviation at `x`.
    pub fn mean_log_std(&self, x: &[f64]) -> (f64, f64) {
        let out = self.net.forward(x);
        (out[0], self.squash(out[1]).0)
    }

    pub fn std(&self, x: &[f64]) -> f64 {
        self.mean_log_std(x).1.exp()
    }

    pub fn nll(&self, x: &[f64], y: f64) -> f64 {
        let (mean, log_std) = self.mean_log_std(x);
        gaussian_nll(y, mean, log_std)
    }

    pub fn log_prob(&self, x: &[f64], y: f64) -> f64 {
        -self.nll(x, y)
    }

    /// Parameter gradient of `a·J(x) + b·log σ(x)`.
    pub fn param_grad(&self, x: &[f64], d_mean: f64, d_log_std: f64) -> Vec<f64> {
        let cache = self.net.forward_cached(x);
        let raw = cache.output()[1];
        let (_, dls_draw) = self.squash(raw);
        self.net.backward(&cache, &[d_mean, d_log_std * dls_draw]).0
    }

    /// Mean NLL over `rows` and its parameter gradient, accumulated into `grads`.
    pub fn nll_batch_grad(&self, data: DataView<'_>, rows: &[usize], grads: &mut [f64]) -> f64 {
        let d = data.dim;
        let mut inputs = Vec::with_capacity(rows.len() * d);
        for &i in rows {
            inputs.extend_from_slice(data.row(i));
        }
        let cache = self.net.forward_batch(&inputs);
        let out = cache.output();
        let n = rows.len() as f64;
        let mut cot = vec![0.0; rows.len() * 2];
        let mut total = 0.0;
        for (k, &i) in rows.iter().enumerate() {
            let (mean, raw) = (out[2 * k], out[2 * k + 1]);
            let (log_std, dls_draw) = self.squash(raw);
            let y = data.y[i];
            total += gaussian_nll(y, mean, log_std);
            let inv_var = (-2.0 * log_std).exp();
            let r = y - mean;
            cot[2 * k] = -r * inv_var / n;
            cot[2 * k + 1] = (1.0 - r * r * inv_var) * dls_draw / n;
        }
        self.net.backward_batch(&cache, &cot, Some(grads));
        total / n
    }

    pub fn mean_nll(&self, data: DataView<'_>) -> f64 {
        (0..data.len()).map(|i| self.nll(data.row(i), data.y[i])).sum::<f64>() / data.len() as f64
    }
}

impl ProxyMean for ProxyModel {
    fn dim(&self) -> usize {
        self.net.input_dim()
    }

    fn predict(&self, x: &[f64]) -> f64 {
        self.net.forward(x)[0]
    }

    fn predict_dual(&self, x: &[Dual]) -> Dual {
        self.net.forward_dual(x)[0]
    }

    fn input_grad(&self, x: &[f64]) -> Vec<f64> {
        self.net.input_gradient(x, &[1.0, 0.0])
    }
}

pub fn gaussian_nll(y: f64, mean: f64, log_std: f64) -> f64 {
    let z = (y - mean) * (-log_std).exp();
    0.5 * (2.0 * PI).ln() + log_std + 0.5 * z * z
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyTrainSpec {
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for ProxyTrainSpec {
    fn default() -> Self {
        ProxyTrainSpec {
            steps: 10_000,
            batch_size: 128,
            adam: AdamConfig::default(),
        }
    }
}

/// Minibatch indices for NLL step `step`. Shared with refinement so a
/// refinement run with a zero KL weight replays plain training exactly.
pub(crate) fn nll_batch_indices(seed: u64, step: u64, n: usize, batch: usize) -> Vec<usize> {
    let mut r = rng::stream(seed, rng::STREAM_PROXY_TRAIN, step);
    (0..batch).map(|_| r.random_range(0..n)).collect()
}

/// Resumable NLL training; step `k` draws its batch from `(seed, k)`.
pub struct ProxyTrainer {
    pub spec: ProxyTrainSpec,
    pub seed: u64,
    pub adam: AdamState,
}

impl ProxyTrainer {
    pub fn new(model: &ProxyModel, spec: ProxyTrainSpec, seed: u64) -> Self {
        ProxyTrainer {
            spec,
            seed,
            adam: AdamState::new(model.net.num_params(), spec.adam),
        }
    }

    pub fn resume(spec: ProxyTrainSpec, seed: u64, adam: AdamState) -> Self {
        ProxyTrainer { spec, seed, adam }
    }

    pub fn run(&mut self, model: &mut ProxyModel, data: DataView<'_>, steps: usize) -> Result<Vec<(u64, f64)>> {
        if data.is_empty() {
            return Err(RgdError::Config("proxy training needs a nonempty dataset".into()));
        }
        let mut grads = vec![0.0; model.net.num_params()];
        let mut trace = Vec::with_capacity(steps);
        for _ in 0..steps {
            let step = self.adam.step;
            let rows = nll_batch_indices(self.seed, step, data.len(), self.spec.batch_size);
            grads.iter_mut().for_each(|g| *g = 0.0);
            let loss = model.nll_batch_grad(data, &rows, &mut grads);
            if !loss.is_finite() {
                return Err(RgdError::non_finite(
                    "proxy training",
                    format!("NLL {loss} at step {step}"),
                ));
            }
            if self.adam.step(model.net.params_mut(), &grads) == AdamOutcome::SkippedNonFinite {
                return Err(RgdError::non_finite(
                    "proxy training",
                    format!("non-finite gradient at step {step}"),
                ));
            }
            trace.push((step, loss));
        }
        Ok(trace)
    }
}

pub fn train_proxy(
    model: &mut ProxyModel,
    data: DataView<'_>,
    spec: ProxyTrainSpec,
    seed: u64,
) -> Result<Vec<(u64, f64)>> {
    let mut trainer = ProxyTrainer::new(model, spec, seed);
    trainer.run(model, data, spec.steps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscentConfig {
    pub step_size: f64,
    pub steps: usize,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig {
            step_size: 0.05,
            steps: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscentTrajectory {
    /// `x_0 ..= x_M`, shorter when truncated.
    pub points: Vec<Vec<f64>>,
    /// Set when a non-finite gradient stopped the ascent early.
    pub truncated: bool,
}

impl AscentTrajectory {
    pub fn last(&self) -> &[f64] {
        self.points.last().expect("trajectory holds the start point")
    }
}

/// `x_{τ+1} = x_τ + η ∇ₓJ(x_τ)` for `τ < M`.
pub fn gradient_ascend<P: ProxyMean + ?Sized>(proxy: &P, x0: &[f64], cfg: AscentConfig) -> AscentTrajectory {
    let mut points = Vec::with_capacity(cfg.steps + 1);
    points.push(x0.to_vec());
    let mut x = x0.to_vec();
    for _ in 0..cfg.steps {
        let g = proxy.input_grad(&x);
        let next: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + cfg.step_size * gi).collect();
        if next.iter().any(|v| !v.is_finite()) {
            return AscentTrajectory {
                points,
                truncated: true,
            };
        }
        points.push(next.clone());
        x = next;
    }
    AscentTrajectory {
        points,
        truncated: false,
    }
}

fn tweedie_coefs(schedule: &VpSchedule, t: f64) -> Result<(f64, f64)> {
    schedule.check_time(t, "tweedie")?;
    let m = schedule.mean_coef(t);
    if m < 1e-8 {
        return Err(RgdError::Config(format!(
            "mean coefficient {m:e} at t={t} is too small to invert"
        )));
    }
    Ok((m, schedule.variance(t)))
}

/// Denoised estimate `x̂₀ = (x_t + σ(t)² s(x_t)) / μ(t)` using the
/// unconditional score.
pub fn tweedie_x0<S: ScoreModel + ?Sized>(schedule: &VpSchedule, score: &S, x_t: &[f64], t: f64) -> Result<Vec<f64>> {
    let (m, var) = tweedie_coefs(schedule, t)?;
    let s = score.score(x_t, t, None);
    Ok(x_t.iter().zip(&s).map(|(x, si)| (x + var * si) / m).collect())
}

pub fn tweedie_x0_dual<S: ScoreModel + ?Sized>(
    schedule: &VpSchedule,
    score: &S,
    x_t: &[Dual],
    t: f64,
) -> Result<Vec<Dual>> {
    let (m, var) = tweedie_coefs(schedule, t)?;
    let s = score.score_dual(x_t, t, None);
    Ok(x_t.iter().zip(&s).map(|(&x, &si)| (x + si * var) / m).collect())
}

/// Proxy prediction for a noisy state: `J(x̂₀(x_t))`.
pub fn proxy_at_time<P, S>(proxy: &P, schedule: &VpSchedule, score: &S, x_t: &[f64], t: f64) -> Result<f64>
where
    P: ProxyMean + ?Sized,
    S: ScoreModel + ?Sized,
{
    Ok(proxy.predict(&tweedie_x0(schedule, score, x_t, t)?))
}

pub fn proxy_at_time_dual<P, S>(proxy: &P, schedule: &VpSchedule, score: &S, x_t: &[Dual], t: f64) -> Result<Dual>
where
    P: ProxyMean + ?Sized,
    S: ScoreModel + ?Sized,
{
    Ok(proxy.predict_dual(&tweedie_x0_dual(schedule, score, x_t, t)?))
}

/// `∇ₓ J(x̂₀(x))` by reverse mode through the Tweedie map.
pub fn proxy_at_time_grad<P, S>(proxy: &P, schedule: &VpSchedule, score: &S, x_t: &[f64], t: f64) -> Result<Vec<f64>>
where
    P: ProxyMean + ?Sized,
    S: ScoreModel + ?Sized,
{
    let (m, var) = tweedie_coefs(schedule, t)?;
    let x0 = tweedie_x0(schedule, score, x_t, t)?;
    let g = proxy.input_grad(&x0);
    let through_score = score.score_vjp(x_t, t, None, &g);
    Ok(g.iter()
        .zip(&through_score)
        .map(|(gi, si)| (gi + var * si) / m)
        .collect())
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::diffusion::GaussianDataScore;

    struct Linear(Vec<f64>);
    impl ProxyMean for Linear {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn predict_dual(&self, x: &[Dual]) -> Dual {
            x.iter()
                .zip(&self.0)
                .fold(Dual::constant(0.0), |acc, (&xi, &w)| acc + xi * w)
        }
    }

    struct NegSquare(usize);
    impl ProxyMean for NegSquare {
        fn dim(&self) -> usize {
            self.0
        }
        fn predict_dual(&self, x: &[Dual]) -> Dual {
            x.iter().fold(Dual::constant(0.0), |acc, &xi| acc - xi * xi)
        }
    }

    /// Proxy whose mean and raw log-std are plain biases.
    fn constant_proxy(mean: f64, raw: f64) -> ProxyModel {
        let mut net = Mlp::new(&[1, 2], Activation::Silu, 0);
        net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        net.set_bias(0, 0, mean);
        net.set_bias(0, 1, raw);
        ProxyModel::from_net(net)
    }

    /// Raw value whose squashed log-std equals `log_std`.
    fn raw_for(p: &ProxyModel, log_std: f64) -> f64 {
        let s = (log_std - p.log_std_min) / (p.log_std_max - p.log_std_min);
        (s / (1.0 - s)).ln()
    }

    #[test]
    fn nll_closed_forms() {
        let base = constant_proxy(0.0, 0.0);
        let unit = constant_proxy(0.0, raw_for(&base, 0.0));
        assert!((unit.nll(&[0.0], 0.0) - 0.918_938_533_204_672_7).abs() < 1e-12);
        assert!((unit.nll(&[0.0], 1.0) - 1.418_938_533_204_672_7).abs() < 1e-12);
        let two = constant_proxy(0.0, raw_for(&base, 2f64.ln()));
        assert!((two.nll(&[0.0], 0.0) - (2.0 * (2.0 * PI).sqrt()).ln()).abs() < 1e-12);
        assert!((two.nll(&[0.0], 0.0) - 1.612_085_713_764_618).abs() < 1e-9);
    }

    #[test]
    fn log_std_stays_within_bounds() {
        for raw in [-1e6, -30.0, 0.0, 30.0, 1e6] {
            let p = constant_proxy(0.0, raw);
            let ls = p.mean_log_std(&[0.0]).1;
            assert!((p.log_std_min..=p.log_std_max).contains(&ls), "raw {raw} -> {ls}");
        }
    }

    #[test]
    fn nll_param_gradient_matches_finite_differences() {
        let mut p = ProxyModel::new(3, &[6, 6], 4);
        for j in 0..2 {
            p.net.set_bias(2, j, 0.3 * (j as f64 + 1.0));
        }
        let x = vec![0.4, -0.8, 0.1, 1.0, 0.2, -0.3];
        let y = vec![0.7, -1.2];
        let data = DataView::new(&x, &y, 3);
        let mut g = vec![0.0; p.net.num_params()];
        p.nll_batch_grad(data, &[0, 1], &mut g);
        let h = 1e-5;
        for i in 0..p.net.num_params() {
            let mut a = p.clone();
            a.net.params_mut()[i] += h;
            let mut b = p.clone();
            b.net.params_mut()[i] -= h;
            let fd = (a.mean_nll(data) - b.mean_nll(data)) / (2.0 * h);
            let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-4);
            assert!(rel < 1e-5, "param {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn zero_training_steps_leave_parameters() {
        let mut p = ProxyModel::new(2, &[4], 1);
        let before = p.clone();
        let x = vec![0.0; 4];
        let y = vec![1.0, 2.0];
        let spec = ProxyTrainSpec {
            steps: 0,
            ..ProxyTrainSpec::default()
        };
        train_proxy(&mut p, DataView::new(&x, &y, 2), spec, 3).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn constant_targets_give_constant_mean_and_tight_std() {
        let mut r = rng::rng_from(0);
        let x: Vec<f64> = (0..400).map(|_| r.random_range(-1.0..1.0)).collect();
        let y = vec![3.0; 200];
        let mut p = ProxyModel::new(2, &[32, 32], 7);
        let spec = ProxyTrainSpec {
            steps: 3000,
            batch_size: 64,
            adam: AdamConfig {
                lr: 3e-3,
                ..AdamConfig::default()
            },
        };
        train_proxy(&mut p, DataView::new(&x, &y, 2), spec, 1).unwrap();
        for probe in [[0.0, 0.0], [0.5, -0.5], [-0.9, 0.9]] {
            let (m, ls) = p.mean_log_std(&probe);
            assert!((m - 3.0).abs() < 0.05, "mean {m}");
            assert!(ls < p.log_std_min + 0.5, "log std {ls}");
        }
    }

    #[test]
    fn fits_noise_free_linear_data() {
        let w = [1.5, -0.5, 0.25];
        let mut r = rng::rng_from(1);
        let gen = |r: &mut rng::Rng, n: usize| {
            let x: Vec<f64> = (0..n * 3).map(|_| r.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = x
                .chunks(3)
                .map(|c| c.iter().zip(&w).map(|(a, b)| a * b).sum())
                .collect();
            (x, y)
        };
        let (x, y) = gen(&mut r, 512);
        let (xt, yt) = gen(&mut r, 200);
        let mut p = ProxyModel::new(3, &[32, 32], 2);
        let spec = ProxyTrainSpec {
            steps: 3000,
            batch_size: 64,
            adam: AdamConfig {
                lr: 3e-3,
                ..AdamConfig::default()
            },
        };
        train_proxy(&mut p, DataView::new(&x, &y, 3), spec, 2).unwrap();
        let (_, var) = crate::data::mean_std(&yt);
        let mse = xt
            .chunks(3)
            .zip(&yt)
            .map(|(xi, yi)| (p.predict(xi) - yi).powi(2))
            .sum::<f64>()
            / yt.len() as f64;
        assert!(mse < 0.01 * var * var, "mse {mse} vs variance {}", var * var);
    }

    #[test]
    fn ascent_with_zero_step_stays_put() {
        let tr = gradient_ascend(
            &Linear(vec![1.0, 2.0]),
            &[0.5, 0.5],
            AscentConfig {
                step_size: 0.0,
                steps: 5,
            },
        );
        assert_eq!(tr.points.len(), 6);
        assert!(tr.points.iter().all(|p| p == &vec![0.5, 0.5]));
    }

    #[test]
    fn ascent_on_linear_proxy_is_exact() {
        let w = vec![0.5, -1.0, 2.0];
        let x0 = vec![1.0, 1.0, 1.0];
        let eta = 0.125;
        let tr = gradient_ascend(
            &Linear(w.clone()),
            &x0,
            AscentConfig {
                step_size: eta,
                steps: 8,
            },
        );
        for (tau, p) in tr.points.iter().enumerate() {
            for i in 0..3 {
                assert_eq!(p[i], x0[i] + tau as f64 * eta * w[i]);
            }
        }
    }

    #[test]
    fn ascent_on_concave_quadratic_contracts_monotonically() {
        let x0 = vec![3.0, -2.0];
        let tr = gradient_ascend(
            &NegSquare(2),
            &x0,
            AscentConfig {
                step_size: 0.1,
                steps: 300,
            },
        );
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(norm(tr.last()) < 1e-8 * norm(&x0));
        let values: Vec<f64> = tr.points.iter().map(|p| NegSquare(2).predict(p)).collect();
        assert!(values.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn ascent_truncates_on_non_finite_gradient() {
        struct Blowup;
        impl ProxyMean for Blowup {
            fn dim(&self) -> usize {
                1
            }
            fn predict_dual(&self, x: &[Dual]) -> Dual {
                (x[0] * x[0]).exp()
            }
        }
        let tr = gradient_ascend(
            &Blowup,
            &[2.0],
            AscentConfig {
                step_size: 10.0,
                steps: 50,
            },
        );
        assert!(tr.truncated);
        assert!(tr.points.iter().all(|p| p[0].is_finite()));
    }

    #[test]
    fn tweedie_inverts_perturbation_with_exact_delta_score() {
        let schedule = VpSchedule::default();
        let mut r = rng::rng_from(4);
        for _ in 0..50 {
            let x0: Vec<f64> = (0..3).map(|_| r.random_range(-2.0..2.0)).collect();
            let t = r.random_range(schedule.t_eps..1.0);
            let eps = rng::normal_vec(&mut r, 3);
            let xt = schedule.perturb(&x0, t, &eps).unwrap();
            let score = GaussianDataScore::delta(schedule, x0.clone());
            let back = tweedie_x0(&schedule, &score, &xt, t).unwrap();
            for (a, b) in back.iter().zip(&x0) {
                assert!((a - b).abs() < 1e-10, "t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn tweedie_near_zero_time_is_identity() {
        let schedule = VpSchedule::default();
        struct Bounded;
        impl ScoreModel for Bounded {
            fn dim(&self) -> usize {
                2
            }
            fn score_dual(&self, x: &[Dual], _t: f64, _c: Option<f64>) -> Vec<Dual> {
                x.iter().map(|&v| v.sin() * 3.0).collect()
            }
        }
        let x = [0.7, -1.4];
        let out = tweedie_x0(&schedule, &Bounded, &x, schedule.t_eps).unwrap();
        let s = Bounded.score(&x, schedule.t_eps, None);
        let snorm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dev = out.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(dev < 1e-3 * (1.0 + snorm), "deviation {dev}");
    }

    #[test]
    fn tweedie_with_standard_normal_data_gives_posterior_mean() {
        let schedule = VpSchedule::default();
        let score = GaussianDataScore::standard(schedule, 2);
        let x = [1.2, -0.4];
        let t = 0.35;
        let out = tweedie_x0(&schedule, &score, &x, t).unwrap();
        let m = schedule.mean_coef(t);
        for (o, xi) in out.iter().zip(&x) {
            assert!((o - m * xi).abs() < 1e-12);
        }
    }

    #[test]
    fn proxy_at_time_composition_and_limit() {
        let schedule = VpSchedule::default();
        let score = GaussianDataScore::standard(schedule, 3);
        let p = ProxyModel::new(3, &[8], 5);
        let x = [0.3, 0.1, -0.6];
        let t = 0.6;
        let composed = p.predict(&tweedie_x0(&schedule, &score, &x, t).unwrap());
        assert_eq!(proxy_at_time(&p, &schedule, &score, &x, t).unwrap(), composed);
        let lim = proxy_at_time(&p, &schedule, &score, &x, schedule.t_eps).unwrap();
        assert!((lim - p.predict(&x)).abs() < 1e-3);
    }

    #[test]
    fn proxy_at_time_derivatives_match_finite_differences() {
        let schedule = VpSchedule::default();
        let score = crate::diffusion::ScoreNet::new(3, &[12, 12], 3, schedule, (0.0, 1.0), 3);
        let p = ProxyModel::new(3, &[10, 10], 6);
        let x = vec![0.3, -0.2, 0.8];
        let v = vec![1.0, 0.5, -0.7];
        let t = 0.4;
        let d = proxy_at_time_dual(&p, &schedule, &score, &dual::zip(&x, &v), t).unwrap();
        let h = 1e-5;
        let f = |s: f64| {
            let xs: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + s * b).collect();
            proxy_at_time(&p, &schedule, &score, &xs, t).unwrap()
        };
        let fd = (f(h) - f(-h)) / (2.0 * h);
        assert!((d.t - fd).abs() / fd.abs().max(1e-3) < 1e-5, "{} vs {fd}", d.t);
        let g = proxy_at_time_grad(&p, &schedule, &score, &x, t).unwrap();
        let via_grad: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((via_grad - d.t).abs() < 1e-10);
    }

    #[test]
    fn proxy_at_time_uses_unconditional_mode() {
        struct Counting {
            cond: AtomicUsize,
            uncond: AtomicUsize,
        }
        impl ScoreModel for Counting {
            fn dim(&self) -> usize {
                2
            }
            fn score_dual(&self, x: &[Dual], _t: f64, c: Option<f64>) -> Vec<Dual> {
                match c {
                    Some(_) => self.cond.fetch_add(1, Ordering::SeqCst),
                    None => self.uncond.fetch_add(1, Ordering::SeqCst),
                };
                x.iter().map(|&v| -v).collect()
            }
        }
        let s = Counting {
            cond: AtomicUsize::new(0),
            uncond: AtomicUsize::new(0),
        };
        let schedule = VpSchedule::default();
        let p = Linear(vec![1.0, 1.0]);
        proxy_at_time(&p, &schedule, &s, &[0.1, 0.2], 0.5).unwrap();
        proxy_at_time_dual(&p, &schedule, &s, &dual::constants(&[0.1, 0.2]), 0.5).unwrap();
        proxy_at_time_grad(&p, &schedule, &s, &[0.1, 0.2], 0.5).unwrap();
        assert_eq!(s.cond.load(Ordering::SeqCst), 0);
        assert!(s.uncond.load(Ordering::SeqCst) >= 3);
    }
}
