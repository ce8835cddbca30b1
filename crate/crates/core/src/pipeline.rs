//! End-to-end run configuration and the stages shared by the CLI and the
//! acceptance harness. Networks live in standardized coordinates; designs
//! are mapped back to the raw box before they reach the oracle.

use serde::{Deserialize, Serialize};

use crate::benchmark::{evaluate, generate_dataset, EvalReport, OfflineDataset, Task};
use crate::data::{mean_std, DataView};
use crate::diffusion::{ScoreNet, ScoreTrainSpec, ScoreTrainer, VpSchedule};
use crate::error::{Result, RgdError};
use crate::likelihood::{Divergence, FlowOdeConfig, KdeModel, PosteriorRecord};
use crate::nn::{AdamConfig, AdamState};
use crate::proxy::{AscentConfig, ProxyMean, ProxyModel, ProxyTrainSpec, ProxyTrainer};
use crate::refinement::{
    build_adversarial_set, diffusion_mean, gather, grid_posteriors, linspace, posterior_records, refine_proxy,
    validation_split, AdversarialSet, AlphaState, GridPosterior, RefineConfig, RefineOutcome,
};
use crate::rng;
use crate::sampler::{sample_batch, BatchOutput, SamplerConfig, Strategy};

const STREAM_SAMPLE_GROUP: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    pub dim: usize,
    pub rows: usize,
    pub cap: f64,
    pub pool_size: usize,
}

impl Default for TaskSection {
    fn default() -> Self {
        TaskSection {
            dim: 60,
            rows: 50_000,
            cap: 0.52,
            pool_size: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionSection {
    pub hidden: Vec<usize>,
    pub time_features: usize,
    pub schedule: VpSchedule,
    pub train: ScoreTrainSpec,
}

impl Default for DiffusionSection {
    fn default() -> Self {
        DiffusionSection {
            hidden: vec![256, 256, 256],
            time_features: 16,
            schedule: VpSchedule::default(),
            train: ScoreTrainSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxySection {
    pub hidden: Vec<usize>,
    pub train: ProxyTrainSpec,
}

impl Default for ProxySection {
    fn default() -> Self {
        ProxySection {
            hidden: vec![256, 256, 256],
            train: ProxyTrainSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorMode {
    Grid,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefinementSection {
    pub adversarial: usize,
    pub ascent: AscentConfig,
    pub steps: usize,
    pub train_batch: usize,
    pub val_batch: usize,
    pub adv_batch: usize,
    pub mc_samples: usize,
    pub val_fraction: f64,
    pub alpha_init: f64,
    pub outer_lr: f64,
    /// Fixes α (zero allowed) and disables its update.
    pub frozen_alpha: Option<f64>,
    pub adam: AdamConfig,
    pub posterior: PosteriorMode,
    pub grid_points: usize,
    pub ode: FlowOdeConfig,
    /// Importance samples for the diffusion-mean diagnostic.
    pub diagnostic_samples: usize,
}

impl Default for RefinementSection {
    fn default() -> Self {
        RefinementSection {
            adversarial: 128,
            ascent: AscentConfig::default(),
            steps: 200,
            train_batch: 256,
            val_batch: 256,
            adv_batch: 0,
            mc_samples: 8,
            val_fraction: 0.1,
            alpha_init: 1.0,
            outer_lr: 1e-2,
            frozen_alpha: None,
            adam: AdamConfig::default(),
            posterior: PosteriorMode::Grid,
            grid_points: 24,
            ode: FlowOdeConfig {
                ode_steps: 100,
                divergence: Divergence::Hutchinson {
                    probes: 4,
                    probe_seed: 0,
                },
            },
            diagnostic_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub steps: usize,
    pub omega0: f64,
    pub eta: f64,
    pub k_omega: usize,
    /// Condition as a multiple of the dataset best, measured in normalized
    /// score units.
    pub condition_ratio: f64,
    pub strategy: String,
    pub chains: usize,
    /// ω of the high fixed-strength ablation.
    pub high_omega: f64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        SamplerSection {
            steps: 1000,
            omega0: 2.0,
            eta: 0.01,
            k_omega: 1,
            condition_ratio: 1.0,
            strategy: "rgd".into(),
            chains: 128,
            high_omega: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub budget: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { budget: 128 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub seeds: usize,
    pub steps_sweep: Vec<usize>,
    pub condition_sweep: Vec<f64>,
    pub eta_sweep: Vec<f64>,
}

impl Default for AblationSection {
    fn default() -> Self {
        AblationSection {
            seeds: 8,
            steps_sweep: vec![],
            condition_sweep: vec![],
            eta_sweep: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub out: String,
    pub task: TaskSection,
    pub diffusion: DiffusionSection,
    pub proxy: ProxySection,
    pub refinement: RefinementSection,
    pub sampler: SamplerSection,
    pub eval: EvalSection,
    pub ablation: AblationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workers: 0,
            out: "runs/default".into(),
            task: TaskSection::default(),
            diffusion: DiffusionSection::default(),
            proxy: ProxySection::default(),
            refinement: RefinementSection::default(),
            sampler: SamplerSection::default(),
            eval: EvalSection::default(),
            ablation: AblationSection::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.task().validate()?;
        self.diffusion.schedule.validate()?;
        self.diffusion.train.validate()?;
        self.refinement.ode.validate()?;
        Strategy::parse(&self.sampler.strategy)?;
        if self.diffusion.time_features == 0 {
            return Err(RgdError::Config("diffusion.time_features must be positive".into()));
        }
        if self.proxy.train.batch_size == 0 {
            return Err(RgdError::Config("proxy.train.batch_size must be positive".into()));
        }
        let r = &self.refinement;
        if !(r.val_fraction > 0.0 && r.val_fraction < 1.0) {
            return Err(RgdError::Config(format!(
                "refinement.val_fraction {} must lie in (0, 1)",
                r.val_fraction
            )));
        }
        if !(r.alpha_init > 0.0 && r.alpha_init.is_finite()) {
            return Err(RgdError::Config("refinement.alpha_init must be positive".into()));
        }
        if r.mc_samples == 0 || r.grid_points < 2 || r.train_batch == 0 || r.val_batch == 0 {
            return Err(RgdError::Config(
                "refinement needs positive mc_samples, batches and at least two grid points".into(),
            ));
        }
        if let Some(a) = r.frozen_alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(RgdError::Config(
                    "refinement.frozen_alpha must be finite and non-negative".into(),
                ));
            }
        }
        if self.sampler.chains == 0 {
            return Err(RgdError::Config("sampler.chains must be positive".into()));
        }
        if !(self.sampler.condition_ratio.is_finite()) {
            return Err(RgdError::Config("sampler.condition_ratio must be finite".into()));
        }
        Ok(())
    }

    pub fn task(&self) -> Task {
        Task::rosenbrock(self.task.dim)
    }

    pub fn strategy(&self) -> Result<Strategy> {
        Strategy::parse(&self.sampler.strategy)
    }
}

pub fn stage_dataset(cfg: &RunConfig) -> Result<OfflineDataset> {
    let t = &cfg.task;
    generate_dataset(&cfg.task(), t.rows, t.cap, t.pool_size, cfg.seed)
}

pub fn new_score_net(cfg: &RunConfig, ds: &OfflineDataset) -> ScoreNet {
    let (_, zy) = ds.model_space();
    ScoreNet::new(
        ds.dim(),
        &cfg.diffusion.hidden,
        cfg.diffusion.time_features,
        cfg.diffusion.schedule,
        mean_std(&zy),
        rng::derive_seed(cfg.seed, rng::STREAM_INIT, 0),
    )
}

pub fn new_proxy(cfg: &RunConfig, ds: &OfflineDataset) -> ProxyModel {
    ProxyModel::new(
        ds.dim(),
        &cfg.proxy.hidden,
        rng::derive_seed(cfg.seed, rng::STREAM_INIT, 1),
    )
}

pub struct Trained<M> {
    pub model: M,
    pub adam: AdamState,
    pub losses: Vec<(u64, f64)>,
}

/// Trains the score network for `steps` more steps, optionally continuing
/// from a checkpointed `(net, adam)` pair.
pub fn stage_train_diffusion(
    cfg: &RunConfig,
    ds: &OfflineDataset,
    resume: Option<(ScoreNet, AdamState)>,
    steps: usize,
) -> Result<Trained<ScoreNet>> {
    let (zx, zy) = ds.model_space();
    let (mut net, mut trainer) = match resume {
        Some((net, adam)) => (net, ScoreTrainer::resume(cfg.diffusion.train, cfg.seed, adam)?),
        None => {
            let net = new_score_net(cfg, ds);
            let trainer = ScoreTrainer::new(&net, cfg.diffusion.train, cfg.seed)?;
            (net, trainer)
        }
    };
    let losses = trainer.run(&mut net, DataView::new(&zx, &zy, ds.dim()), steps)?;
    Ok(Trained {
        model: net,
        adam: trainer.adam,
        losses,
    })
}

pub fn stage_train_proxy(
    cfg: &RunConfig,
    ds: &OfflineDataset,
    resume: Option<(ProxyModel, AdamState)>,
    steps: usize,
) -> Result<Trained<ProxyModel>> {
    let (zx, zy) = ds.model_space();
    let (mut model, mut trainer) = match resume {
        Some((m, adam)) => (m, ProxyTrainer::resume(cfg.proxy.train, cfg.seed, adam)),
        None => {
            let m = new_proxy(cfg, ds);
            let trainer = ProxyTrainer::new(&m, cfg.proxy.train, cfg.seed);
            (m, trainer)
        }
    };
    let losses = trainer.run(&mut model, DataView::new(&zx, &zy, ds.dim()), steps)?;
    Ok(Trained {
        model,
        adam: trainer.adam,
        losses,
    })
}

/// One adversarial design before and after refinement, in raw units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialRow {
    pub index: usize,
    pub start_row: usize,
    pub proxy_before: f64,
    pub proxy_after: f64,
    pub diffusion_mean: f64,
    pub ess: f64,
    pub unreliable: bool,
    pub oracle: f64,
}

pub struct RefineReport {
    pub outcome: RefineOutcome,
    pub adversarial: AdversarialSet,
    pub rows: Vec<AdversarialRow>,
    /// Conditional-plus-unconditional ODE solves spent on posteriors.
    pub ode_solves: usize,
}

impl RefineReport {
    pub fn proxy(&self) -> &ProxyModel {
        &self.outcome.proxy
    }

    /// Mean |proxy − oracle| over the adversarial set before and after.
    pub fn mean_abs_error(&self) -> (f64, f64) {
        let n = self.rows.len() as f64;
        let before = self.rows.iter().map(|r| (r.proxy_before - r.oracle).abs()).sum::<f64>() / n;
        let after = self.rows.iter().map(|r| (r.proxy_after - r.oracle).abs()).sum::<f64>() / n;
        (before, after)
    }

    /// Share of designs whose diffusion mean is closer to the oracle than the
    /// unrefined proxy mean.
    pub fn diffusion_mean_wins(&self) -> f64 {
        let wins = self
            .rows
            .iter()
            .filter(|r| (r.diffusion_mean - r.oracle).abs() < (r.proxy_before - r.oracle).abs())
            .count();
        wins as f64 / self.rows.len() as f64
    }
}

/// Everything refinement needs that does not depend on the refinement seed:
/// the adversarial set and its cached posteriors.
#[derive(Debug, Clone)]
pub struct RefineSetup {
    pub adversarial: AdversarialSet,
    pub records: Vec<PosteriorRecord>,
    pub kde: KdeModel,
    pub grid: Vec<f64>,
    pub grid_posteriors: Vec<GridPosterior>,
}

pub fn prepare_refine(
    cfg: &RunConfig,
    ds: &OfflineDataset,
    score: &ScoreNet,
    proxy: &ProxyModel,
) -> Result<RefineSetup> {
    let r = &cfg.refinement;
    let (zx, zy) = ds.model_space();
    let all = DataView::new(&zx, &zy, ds.dim());
    let adv = build_adversarial_set(proxy, all, r.ascent, r.adversarial.min(ds.len()), cfg.workers)?;
    let kde = KdeModel::silverman(zy.clone())?;
    let records = posterior_records(score, &score.schedule, &adv.designs, &r.ode, cfg.workers)?;
    let (y_lo, y_hi) = zy.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let pred_hi = adv
        .designs
        .iter()
        .map(|x| {
            let (m, s) = proxy.mean_log_std(x);
            m + 3.0 * s.exp()
        })
        .fold(y_hi, f64::max);
    let grid = linspace(y_lo - 1.0, pred_hi + 1.0, r.grid_points);
    let grid_posteriors = grid_posteriors(score, &score.schedule, &kde, &records, &grid, &r.ode, cfg.workers)?;
    Ok(RefineSetup {
        adversarial: adv,
        records,
        kde,
        grid,
        grid_posteriors,
    })
}

/// Builds the adversarial set, tabulates the diffusion posterior on it and
/// refines the proxy. Only the diagnostic table touches the oracle, after
/// refinement has finished.
pub fn stage_refine(
    cfg: &RunConfig,
    ds: &OfflineDataset,
    score: &ScoreNet,
    proxy: &ProxyModel,
) -> Result<RefineReport> {
    let setup = prepare_refine(cfg, ds, score, proxy)?;
    stage_refine_with(cfg, ds, score, proxy, setup, cfg.seed)
}

/// Refinement proper on a prepared setup. `seed` drives the validation split,
/// minibatches and Monte Carlo draws; the dataset and networks are untouched.
pub fn stage_refine_with(
    cfg: &RunConfig,
    ds: &OfflineDataset,
    score: &ScoreNet,
    proxy: &ProxyModel,
    setup: RefineSetup,
    seed: u64,
) -> Result<RefineReport> {
    let r = &cfg.refinement;
    let (zx, zy) = ds.model_space();
    let d = ds.dim();
    let all = DataView::new(&zx, &zy, d);
    let adv = &setup.adversarial;
    let refine_cfg = RefineConfig {
        steps: r.steps,
        train_batch: r.train_batch,
        val_batch: r.val_batch,
        adv_batch: r.adv_batch,
        mc_samples: r.mc_samples,
        adam: r.adam,
    };
    let alpha = AlphaState {
        log_alpha: r.alpha_init.ln(),
        outer_lr: r.outer_lr,
        frozen: r.frozen_alpha,
    };
    let (tr, va) = validation_split(ds.len(), r.val_fraction, seed);
    let (tx, ty) = gather(all, &tr);
    let (vx, vy) = gather(all, &va);
    let train = DataView::new(&tx, &ty, d);
    let val = DataView::new(&vx, &vy, d);
    let (outcome, ode_solves) = match r.posterior {
        PosteriorMode::Grid => {
            let out = refine_proxy(proxy, train, val, adv, &setup.grid_posteriors, alpha, &refine_cfg, seed)?;
            (out, adv.len() * (1 + setup.grid.len()))
        }
        PosteriorMode::Exact => {
            let posts: Vec<_> = setup
                .records
                .iter()
                .map(|rec| crate::refinement::OdePosterior {
                    score,
                    schedule: score.schedule,
                    kde: &setup.kde,
                    record: rec.clone(),
                    cfg: r.ode,
                })
                .collect();
            let out = refine_proxy(proxy, train, val, adv, &posts, alpha, &refine_cfg, seed)?;
            // The diagnostic still uses the tabulated posteriors.
            (out, adv.len() * (1 + setup.grid.len() + r.steps * r.mc_samples))
        }
    };
    let task = cfg.task();
    let mut rows = Vec::with_capacity(adv.len());
    for (j, x) in adv.designs.iter().enumerate() {
        let dm = diffusion_mean(
            proxy,
            &setup.grid_posteriors[j],
            x,
            r.diagnostic_samples,
            rng::derive_seed(seed, rng::STREAM_REFINE_KL, u64::MAX - j as u64),
            true,
        )?;
        rows.push(AdversarialRow {
            index: j,
            start_row: adv.starts[j],
            proxy_before: ds.y_from_model(proxy.predict(x)),
            proxy_after: ds.y_from_model(outcome.proxy.predict(x)),
            diffusion_mean: ds.y_from_model(dm.mean),
            ess: dm.ess,
            unreliable: dm.unreliable,
            oracle: task.oracle(&ds.x_from_model(x)),
        });
    }
    Ok(RefineReport {
        outcome,
        adversarial: setup.adversarial,
        rows,
        ode_solves,
    })
}

/// Raw-unit sampling condition: `condition_ratio` times the dataset best in
/// normalized units.
pub fn condition_raw(cfg: &RunConfig, ds: &OfflineDataset) -> Result<f64> {
    let best = ds.normalized_max()?;
    let target = cfg.sampler.condition_ratio * best;
    Ok(ds.meta.y_min_ref + target * (ds.meta.y_max_true - ds.meta.y_min_ref))
}

pub fn sampler_config(cfg: &RunConfig, ds: &OfflineDataset, strategy: Strategy) -> Result<SamplerConfig> {
    let s = &cfg.sampler;
    let out = SamplerConfig {
        steps: s.steps,
        condition: ds.y_to_model(condition_raw(cfg, ds)?),
        omega0: s.omega0,
        eta: s.eta,
        k_omega: s.k_omega,
        strategy,
    };
    out.validate()?;
    Ok(out)
}

pub struct SampleRun {
    /// Raw-box designs of the successful chains, in chain order.
    pub designs: Vec<Vec<f64>>,
    pub batch: BatchOutput,
}

/// Runs `cfg.sampler.chains` chains for seed group `group`.
pub fn stage_sample<P: ProxyMean + ?Sized>(
    cfg: &RunConfig,
    ds: &OfflineDataset,
    score: &ScoreNet,
    proxy: &P,
    sampler: &SamplerConfig,
    group: u64,
) -> Result<SampleRun> {
    let base = rng::derive_seed(cfg.seed, STREAM_SAMPLE_GROUP, group);
    let batch = sample_batch(
        score,
        &score.schedule,
        proxy,
        sampler,
        cfg.sampler.chains,
        base,
        cfg.workers,
    )?;
    let designs = batch.candidates().iter().map(|c| ds.x_from_model(&c.design)).collect();
    Ok(SampleRun { designs, batch })
}

pub fn stage_evaluate(cfg: &RunConfig, ds: &OfflineDataset, designs: &[Vec<f64>], digest: &str) -> Result<EvalReport> {
    evaluate(designs, &cfg.task(), ds, cfg.eval.budget, cfg.seed, digest, cfg.workers)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Rgd,
    WithoutProxyGuidance,
    WithoutRefinement,
    DirectGrad,
    CosineIncrease,
    CosineDecrease,
    HighFixedOmega,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Rgd,
        Variant::WithoutProxyGuidance,
        Variant::WithoutRefinement,
        Variant::DirectGrad,
        Variant::CosineIncrease,
        Variant::CosineDecrease,
        Variant::HighFixedOmega,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Rgd => "rgd",
            Variant::WithoutProxyGuidance => "wo_proxy_guidance",
            Variant::WithoutRefinement => "wo_refinement",
            Variant::DirectGrad => "direct_grad",
            Variant::CosineIncrease => "cosine_increase",
            Variant::CosineDecrease => "cosine_decrease",
            Variant::HighFixedOmega => "high_fixed_omega",
        }
    }

    /// Sampler configuration and whether the refined proxy drives it.
    pub fn setup(self, base: &SamplerConfig, high_omega: f64) -> (SamplerConfig, bool) {
        let mut s = *base;
        let refined = match self {
            Variant::Rgd => {
                s.strategy = Strategy::Rgd;
                true
            }
            Variant::WithoutRefinement => {
                s.strategy = Strategy::Rgd;
                false
            }
            Variant::WithoutProxyGuidance => {
                s.strategy = Strategy::FixedOmega;
                false
            }
            Variant::DirectGrad => {
                s.strategy = Strategy::DirectGrad { lr: 0.1 };
                true
            }
            Variant::CosineIncrease => {
                s.strategy = Strategy::CosineIncrease { lo: 0.0, hi: 4.0 };
                false
            }
            Variant::CosineDecrease => {
                s.strategy = Strategy::CosineDecrease { hi: 4.0, lo: 0.0 };
                false
            }
            Variant::HighFixedOmega => {
                s.strategy = Strategy::FixedOmega;
                s.omega0 = high_omega;
                false
            }
        };
        (s, refined)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub seed_group: u64,
    /// Swept parameter (`none`, `steps`, `condition_ratio` or `eta`).
    pub param: String,
    pub value: f64,
    pub max: Option<f64>,
    pub median: Option<f64>,
    pub mean_raw: Option<f64>,
    pub error: Option<String>,
}

fn ablation_row(
    cfg: &RunConfig,
    ds: &OfflineDataset,
    score: &ScoreNet,
    proxy: &ProxyModel,
    sampler: &SamplerConfig,
    name: &str,
    group: u64,
    param: &str,
    value: f64,
) -> AblationRow {
    let result =
        stage_sample(cfg, ds, score, proxy, sampler, group).and_then(|run| stage_evaluate(cfg, ds, &run.designs, name));
    let mut row = AblationRow {
        variant: name.to_string(),
        seed_group: group,
        param: param.to_string(),
        value,
        max: None,
        median: None,
        mean_raw: None,
        error: None,
    };
    match result {
        Ok(rep) => {
            row.max = Some(rep.max);
            row.median = Some(rep.median);
            row.mean_raw = Some(rep.scores.iter().sum::<f64>() / rep.scores.len() as f64);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Every variant for every seed group, then the rgd sensitivity sweeps.
/// Failures are recorded per row rather than aborting the table.
pub fn run_ablation(
    cfg: &RunConfig,
    ds: &OfflineDataset,
    score: &ScoreNet,
    unrefined: &ProxyModel,
    refined: &ProxyModel,
) -> Result<Vec<AblationRow>> {
    let base = sampler_config(cfg, ds, Strategy::Rgd)?;
    let mut rows = Vec::new();
    for group in 0..cfg.ablation.seeds as u64 {
        for v in Variant::ALL {
            let (s, use_refined) = v.setup(&base, cfg.sampler.high_omega);
            let p = if use_refined { refined } else { unrefined };
            rows.push(ablation_row(cfg, ds, score, p, &s, v.name(), group, "none", f64::NAN));
        }
        for &t in &cfg.ablation.steps_sweep {
            let s = SamplerConfig { steps: t, ..base };
            rows.push(ablation_row(
                cfg, ds, score, refined, &s, "rgd", group, "steps", t as f64,
            ));
        }
        for &ratio in &cfg.ablation.condition_sweep {
            let mut c = cfg.clone();
            c.sampler.condition_ratio = ratio;
            let s = sampler_config(&c, ds, Strategy::Rgd)?;
            rows.push(ablation_row(
                cfg,
                ds,
                score,
                refined,
                &s,
                "rgd",
                group,
                "condition_ratio",
                ratio,
            ));
        }
        for &eta in &cfg.ablation.eta_sweep {
            let s = SamplerConfig { eta, ..base };
            rows.push(ablation_row(cfg, ds, score, refined, &s, "rgd", group, "eta", eta));
        }
    }
    Ok(rows)
}
