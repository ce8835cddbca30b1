//! Proxy refinement against the diffusion model's own posterior over scores
//! on adversarial designs.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{mean_std, DataView};
use crate::diffusion::{ScoreModel, VpSchedule};
use crate::error::{Result, RgdError};
use crate::likelihood::{log_density, posterior_logpdf, FlowOdeConfig, KdeModel, PosteriorRecord};
use crate::nn::{AdamConfig, AdamOutcome, AdamState};
use crate::parallel;
use crate::proxy::{gradient_ascend, nll_batch_indices, AscentConfig, ProxyMean, ProxyModel};
use crate::rng;

/// Log-density of the diffusion posterior `p_θ(y | x̂)` for one fixed design.
pub trait DiffusionPosterior: Sync {
    fn log_prob(&self, y: f64) -> Result<f64>;
}

impl<F: Fn(f64) -> f64 + Sync> DiffusionPosterior for F {
    fn log_prob(&self, y: f64) -> Result<f64> {
        Ok(self(y))
    }
}

/// Exact posterior: one conditional ODE solve per query.
pub struct OdePosterior<'a, S: ScoreModel + ?Sized> {
    pub score: &'a S,
    pub schedule: VpSchedule,
    pub kde: &'a KdeModel,
    pub record: PosteriorRecord,
    pub cfg: FlowOdeConfig,
}

impl<S: ScoreModel + ?Sized> DiffusionPosterior for OdePosterior<'_, S> {
    fn log_prob(&self, y: f64) -> Result<f64> {
        posterior_logpdf(self.score, &self.schedule, self.kde, &self.record, y, &self.cfg)
    }
}

/// Posterior tabulated on a y-grid and linearly interpolated; outside the
/// grid the end segments are extended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPosterior {
    pub ys: Vec<f64>,
    pub log_probs: Vec<f64>,
}

impl GridPosterior {
    pub fn new(ys: Vec<f64>, log_probs: Vec<f64>) -> Result<Self> {
        if ys.len() < 2 || ys.len() != log_probs.len() {
            return Err(RgdError::Config(
                "grid posterior needs at least two matching points".into(),
            ));
        }
        if ys.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(RgdError::Config("grid posterior abscissae must increase".into()));
        }
        Ok(GridPosterior { ys, log_probs })
    }

    /// Tabulates `log p_θ(y | x̂)` at `ys`: one unconditional solve (taken
    /// from `record`) and one conditional solve per grid point.
    pub fn build<S: ScoreModel + ?Sized>(
        score: &S,
        schedule: &VpSchedule,
        kde: &KdeModel,
        record: &PosteriorRecord,
        ys: Vec<f64>,
        cfg: &FlowOdeConfig,
    ) -> Result<Self> {
        let log_probs = ys
            .iter()
            .map(|&y| posterior_logpdf(score, schedule, kde, record, y, cfg))
            .collect::<Result<Vec<f64>>>()?;
        Self::new(ys, log_probs)
    }
}

impl DiffusionPosterior for GridPosterior {
    fn log_prob(&self, y: f64) -> Result<f64> {
        let n = self.ys.len();
        let i = match self.ys.partition_point(|&g| g <= y) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let (l0, l1) = (self.log_probs[i], self.log_probs[i + 1]);
        Ok(l0 + (l1 - l0) * (y - y0) / (y1 - y0))
    }
}

/// Evenly spaced points covering `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialSet {
    pub designs: Vec<Vec<f64>>,
    /// Dataset row each ascent started from.
    pub starts: Vec<usize>,
    pub ascent: AscentConfig,
    /// Designs whose prediction exceeds the dataset's best score.
    pub qualified: usize,
    /// Set when fewer than all designs qualified and the highest-predicted
    /// finals were kept instead.
    pub fallback: bool,
    /// Ascents stopped early by a non-finite gradient.
    pub truncated: usize,
}

impl AdversarialSet {
    pub fn len(&self) -> usize {
        self.designs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.designs.is_empty()
    }
}

/// Gradient ascent from the `k` highest-scoring dataset designs.
pub fn build_adversarial_set<P: ProxyMean + ?Sized>(
    proxy: &P,
    data: DataView<'_>,
    cfg: AscentConfig,
    k: usize,
    workers: usize,
) -> Result<AdversarialSet> {
    if k == 0 || k > data.len() {
        return Err(RgdError::Config(format!(
            "adversarial set size {k} must lie in 1..={}",
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data.y[b].total_cmp(&data.y[a]).then(a.cmp(&b)));
    order.truncate(k);
    let y_best = data.y[order[0]];
    let runs = parallel::map_slice(&order, workers, |&i| gradient_ascend(proxy, data.row(i), cfg));
    let truncated = runs.iter().filter(|r| r.truncated).count();
    let finals: Vec<(usize, Vec<f64>, f64)> = order
        .iter()
        .zip(&runs)
        .map(|(&i, r)| {
            let x = r.last().to_vec();
            let p = proxy.predict(&x);
            (i, x, p)
        })
        .filter(|(_, x, p)| p.is_finite() && x.iter().all(|v| v.is_finite()))
        .collect();
    if finals.is_empty() {
        return Err(RgdError::non_finite("adversarial search", "no finite ascent endpoint"));
    }
    let qualified = finals.iter().filter(|(_, _, p)| *p > y_best).count();
    Ok(AdversarialSet {
        starts: finals.iter().map(|f| f.0).collect(),
        designs: finals.into_iter().map(|f| f.1).collect(),
        ascent: cfg,
        qualified,
        fallback: qualified < k,
        truncated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    pub value: f64,
    /// Standard error of `value` over the retained samples.
    pub std_err: f64,
    pub mc_samples: usize,
    pub dropped: usize,
    /// `(y_m, log p_φ(y_m) − log p_θ(y_m))` per retained sample.
    pub terms: Vec<(f64, f64)>,
}

fn log_normal(z: f64, log_std: f64) -> f64 {
    -0.5 * z * z - log_std - 0.5 * (2.0 * PI).ln()
}

struct Draws {
    log_std: f64,
    /// `(z, y, log p_φ(y), log p_θ(y))` for retained samples.
    rows: Vec<(f64, f64, f64, f64)>,
    dropped: usize,
}

fn draw<P: DiffusionPosterior + ?Sized>(proxy: &ProxyModel, post: &P, x: &[f64], m: usize, seed: u64) -> Result<Draws> {
    if m == 0 {
        return Err(RgdError::Config("need at least one Monte Carlo sample".into()));
    }
    let (mean, log_std) = proxy.mean_log_std(x);
    let sd = log_std.exp();
    let mut r = rng::stream(seed, rng::STREAM_REFINE_KL, 0);
    let mut rows = Vec::with_capacity(m);
    let mut dropped = 0;
    for _ in 0..m {
        let z = rng::normal(&mut r);
        let y = mean + sd * z;
        match post.log_prob(y) {
            Ok(lt) if lt.is_finite() => rows.push((z, y, log_normal(z, log_std), lt)),
            _ => dropped += 1,
        }
    }
    if rows.is_empty() {
        return Err(RgdError::non_finite(
            "KL estimate",
            format!("all {m} posterior evaluations failed"),
        ));
    }
    Ok(Draws { log_std, rows, dropped })
}

fn estimate(d: &Draws, m: usize) -> KlEstimate {
    let terms: Vec<(f64, f64)> = d.rows.iter().map(|&(_, y, lp, lt)| (y, lp - lt)).collect();
    let vals: Vec<f64> = terms.iter().map(|t| t.1).collect();
    let (value, sd) = mean_std(&vals);
    KlEstimate {
        value,
        std_err: sd / (vals.len() as f64).sqrt(),
        mc_samples: m,
        dropped: d.dropped,
        terms,
    }
}

/// Monte Carlo `KL(p_φ(·|x̂) ‖ p_θ(·|x̂))` from `m` draws of the proxy.
pub fn kl_mc<P: DiffusionPosterior + ?Sized>(
    proxy: &ProxyModel,
    post: &P,
    x: &[f64],
    m: usize,
    seed: u64,
) -> Result<KlEstimate> {
    Ok(estimate(&draw(proxy, post, x, m, seed)?, m))
}

/// Score-function gradient `E[∇φ log p_φ(y) · (1 + log p_φ/p_θ)]` using the
/// same draws as [`kl_mc`] with the same seed.
pub fn kl_grad<P: DiffusionPosterior + ?Sized>(
    proxy: &ProxyModel,
    post: &P,
    x: &[f64],
    m: usize,
    seed: u64,
) -> Result<(Vec<f64>, KlEstimate)> {
    let d = draw(proxy, post, x, m, seed)?;
    let n = d.rows.len() as f64;
    let inv_sd = (-d.log_std).exp();
    let (mut c_mean, mut c_log_std) = (0.0, 0.0);
    for &(z, _, lp, lt) in &d.rows {
        let w = (1.0 + lp - lt) / n;
        c_mean += w * z * inv_sd;
        c_log_std += w * (z * z - 1.0);
    }
    Ok((proxy.param_grad(x, c_mean, c_log_std), estimate(&d, m)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionMean {
    pub mean: f64,
    pub ess: f64,
    /// Effective sample size below 5.
    pub unreliable: bool,
}

/// Importance-sampled mean of `p_θ(y|x̂)` with proposals from the proxy.
pub fn diffusion_mean<P: DiffusionPosterior + ?Sized>(
    proxy: &ProxyModel,
    post: &P,
    x: &[f64],
    m: usize,
    seed: u64,
    self_normalized: bool,
) -> Result<DiffusionMean> {
    let d = draw(proxy, post, x, m, seed)?;
    let log_w: Vec<f64> = d.rows.iter().map(|&(_, _, lp, lt)| lt - lp).collect();
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
    let (sw, sw2) = (w.iter().sum::<f64>(), w.iter().map(|v| v * v).sum::<f64>());
    let ess = sw * sw / sw2;
    let mean = if self_normalized {
        d.rows.iter().zip(&w).map(|(r, wi)| wi * r.1).sum::<f64>() / sw
    } else {
        d.rows.iter().zip(&log_w).map(|(r, l)| l.exp() * r.1).sum::<f64>() / d.rows.len() as f64
    };
    Ok(DiffusionMean {
        mean,
        ess,
        unreliable: ess < 5.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaState {
    pub log_alpha: f64,
    pub outer_lr: f64,
    /// Fixed α (zero allowed); disables the outer update.
    pub frozen: Option<f64>,
}

pub const LOG_ALPHA_MAX: f64 = 10.0;
/// Keeps `exp(log_alpha)` representable and strictly positive.
pub const LOG_ALPHA_MIN: f64 = -30.0;

impl Default for AlphaState {
    fn default() -> Self {
        AlphaState {
            log_alpha: 0.0,
            outer_lr: 1e-2,
            frozen: None,
        }
    }
}

impl AlphaState {
    pub fn alpha(&self) -> f64 {
        self.frozen.unwrap_or_else(|| self.log_alpha.exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub steps: usize,
    pub train_batch: usize,
    pub val_batch: usize,
    /// Adversarial designs per step; 0 uses the whole set.
    pub adv_batch: usize,
    /// Posterior queries per adversarial design per step.
    pub mc_samples: usize,
    pub adam: AdamConfig,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            steps: 200,
            train_batch: 256,
            val_batch: 256,
            adv_batch: 0,
            mc_samples: 8,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaRecord {
    pub step: u64,
    pub alpha: f64,
    pub train_nll: f64,
    pub kl: f64,
    pub val_nll: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub proxy: ProxyModel,
    pub alpha: AlphaState,
    pub trace: Vec<AlphaRecord>,
    pub adam: AdamState,
}

/// Splits row indices into (train, validation) with `frac` held out.
pub fn validation_split(n: usize, frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, rng::STREAM_REFINE_VAL, u64::MAX));
    let n_val = ((n as f64 * frac).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let mut val = idx.split_off(n - n_val);
    let mut train = idx;
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Gathers rows into an owned (designs, scores) pair.
pub fn gather(data: DataView<'_>, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::with_capacity(rows.len() * data.dim);
    let mut y = Vec::with_capacity(rows.len());
    for &i in rows {
        x.extend_from_slice(data.row(i));
        y.push(data.y[i]);
    }
    (x, y)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Bi-level refinement: each step takes one Adam step on
/// `NLL_train + α·mean KL` and one first-order step on `log α` against the
/// validation NLL.
///
/// `posteriors[j]` must describe `adv.designs[j]`. Minibatches of the
/// training NLL are drawn exactly as [`crate::proxy::train_proxy`] draws them,
/// so with α frozen at zero the two produce identical weights.
pub fn refine_proxy<P: DiffusionPosterior>(
    proxy: &ProxyModel,
    train: DataView<'_>,
    val: DataView<'_>,
    adv: &AdversarialSet,
    posteriors: &[P],
    alpha: AlphaState,
    cfg: &RefineConfig,
    seed: u64,
) -> Result<RefineOutcome> {
    if train.is_empty() || val.is_empty() {
        return Err(RgdError::Config(
            "refinement needs nonempty train and validation splits".into(),
        ));
    }
    if posteriors.len() != adv.len() {
        return Err(RgdError::Config(format!(
            "{} posteriors for {} adversarial designs",
            posteriors.len(),
            adv.len()
        )));
    }
    let mut model = proxy.clone();
    let mut alpha = alpha;
    let mut adam = AdamState::new(model.net.num_params(), cfg.adam);
    let np = model.net.num_params();
    let mut trace = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let step = adam.step;
        let rows = nll_batch_indices(seed, step, train.len(), cfg.train_batch);
        let mut g_nll = vec![0.0; np];
        let train_nll = model.nll_batch_grad(train, &rows, &mut g_nll);
        let a = alpha.alpha();
        let mut g_kl = vec![0.0; np];
        let mut kl = 0.0;
        let needs_kl = !adv.is_empty() && (a != 0.0 || alpha.frozen.is_none());
        if needs_kl {
            let chosen: Vec<usize> = if cfg.adv_batch == 0 || cfg.adv_batch >= adv.len() {
                (0..adv.len()).collect()
            } else {
                let mut r = rng::stream(seed, rng::STREAM_REFINE_TRAIN, step);
                let mut all: Vec<usize> = (0..adv.len()).collect();
                all.shuffle(&mut r);
                all.truncate(cfg.adv_batch);
                all
            };
            let scale = 1.0 / chosen.len() as f64;
            for &j in &chosen {
                let kl_seed = rng::derive_seed(seed, step, j as u64);
                let (g, est) = kl_grad(&model, &posteriors[j], &adv.designs[j], cfg.mc_samples, kl_seed)?;
                for (acc, gi) in g_kl.iter_mut().zip(&g) {
                    *acc += scale * gi;
                }
                kl += scale * est.value;
            }
        }
        let grads: Vec<f64> = if a == 0.0 {
            g_nll.clone()
        } else {
            g_nll.iter().zip(&g_kl).map(|(n, k)| n + a * k).collect()
        };
        if !train_nll.is_finite() {
            return Err(RgdError::non_finite(
                "refinement",
                format!("training NLL {train_nll} at step {step}"),
            ));
        }
        if adam.step(model.net.params_mut(), &grads) == AdamOutcome::SkippedNonFinite {
            return Err(RgdError::non_finite(
                "refinement",
                format!("non-finite gradient at step {step}"),
            ));
        }
        let mut vr = rng::stream(seed, rng::STREAM_REFINE_VAL, step);
        let val_rows: Vec<usize> = (0..cfg.val_batch).map(|_| vr.random_range(0..val.len())).collect();
        let mut g_val = vec![0.0; np];
        let val_nll = model.nll_batch_grad(val, &val_rows, &mut g_val);
        let mut clamped = false;
        if alpha.frozen.is_none() {
            let d_log_alpha = -cfg.adam.lr * dot(&g_val, &g_kl) * a;
            alpha.log_alpha -= alpha.outer_lr * d_log_alpha;
            if !(alpha.log_alpha <= LOG_ALPHA_MAX) {
                alpha.log_alpha = LOG_ALPHA_MAX;
                clamped = true;
            } else if alpha.log_alpha < LOG_ALPHA_MIN {
                alpha.log_alpha = LOG_ALPHA_MIN;
                clamped = true;
            }
        }
        trace.push(AlphaRecord {
            step,
            alpha: alpha.alpha(),
            train_nll,
            kl,
            val_nll,
            clamped,
        });
    }
    Ok(RefineOutcome {
        proxy: model,
        alpha,
        trace,
        adam,
    })
}

/// Unconditional records for every design, computed in parallel.
pub fn posterior_records<S: ScoreModel + ?Sized>(
    score: &S,
    schedule: &VpSchedule,
    designs: &[Vec<f64>],
    cfg: &FlowOdeConfig,
    workers: usize,
) -> Result<Vec<PosteriorRecord>> {
    parallel::map_slice(designs, workers, |x| {
        Ok(PosteriorRecord {
            x: x.clone(),
            log_marginal: log_density(score, schedule, x, None, cfg)?,
        })
    })
    .into_iter()
    .collect()
}

/// Grid posteriors for every design, computed in parallel.
pub fn grid_posteriors<S: ScoreModel + ?Sized>(
    score: &S,
    schedule: &VpSchedule,
    kde: &KdeModel,
    records: &[PosteriorRecord],
    ys: &[f64],
    cfg: &FlowOdeConfig,
    workers: usize,
) -> Result<Vec<GridPosterior>> {
    parallel::map_slice(records, workers, |rec| {
        GridPosterior::build(score, schedule, kde, rec, ys.to_vec(), cfg)
    })
    .into_iter()
    .collect()
}
