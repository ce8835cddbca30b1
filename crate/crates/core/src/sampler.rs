//! Reverse sampling with classifier-free guidance whose strength ω is tuned
//! at every step by ascending the proxy's prediction of the denoised design.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::diffusion::{ScoreModel, VpSchedule};
use crate::error::{Result, RgdError};
use crate::nn::dual::{self, Dual};
use crate::parallel;
use crate::proxy::{proxy_at_time_dual, proxy_at_time_grad, ProxyMean};
use crate::rng;

const STREAM_CHAIN: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    /// ω optimized against the proxy at every step.
    Rgd,
    FixedOmega,
    /// ω rises from `lo` at the first step to `hi` at the last.
    CosineIncrease {
        lo: f64,
        hi: f64,
    },
    /// ω falls from `hi` at the first step to `lo` at the last.
    CosineDecrease {
        hi: f64,
        lo: f64,
    },
    /// Fixed ω plus a gradient step on the proxy after every update.
    DirectGrad {
        lr: f64,
    },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Rgd => "rgd",
            Strategy::FixedOmega => "fixed_omega",
            Strategy::CosineIncrease { .. } => "cosine_increase",
            Strategy::CosineDecrease { .. } => "cosine_decrease",
            Strategy::DirectGrad { .. } => "direct_grad",
        }
    }

    /// Parses `rgd`, `fixed_omega`, `direct_grad[:lr]`,
    /// `cosine_increase[:lo,hi]` or `cosine_decrease[:hi,lo]`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let nums = |default: &[f64]| -> Result<Vec<f64>> {
            match args {
                None => Ok(default.to_vec()),
                Some(a) => {
                    let v: std::result::Result<Vec<f64>, _> = a.split(',').map(|p| p.trim().parse::<f64>()).collect();
                    let v = v.map_err(|e| RgdError::Config(format!("bad strategy arguments in {s:?}: {e}")))?;
                    if v.len() != default.len() {
                        return Err(RgdError::Config(format!(
                            "strategy {name} takes {} arguments, got {}",
                            default.len(),
                            v.len()
                        )));
                    }
                    Ok(v)
                }
            }
        };
        let strategy = match name {
            "rgd" if args.is_none() => Strategy::Rgd,
            "fixed_omega" if args.is_none() => Strategy::FixedOmega,
            "direct_grad" => Strategy::DirectGrad { lr: nums(&[0.1])?[0] },
            "cosine_increase" => {
                let v = nums(&[0.0, 4.0])?;
                Strategy::CosineIncrease { lo: v[0], hi: v[1] }
            }
            "cosine_decrease" => {
                let v = nums(&[4.0, 0.0])?;
                Strategy::CosineDecrease { hi: v[0], lo: v[1] }
            }
            _ => return Err(RgdError::Config(format!("unknown sampling strategy {s:?}"))),
        };
        Ok(strategy)
    }

    fn params_finite(&self) -> bool {
        match *self {
            Strategy::Rgd | Strategy::FixedOmega => true,
            Strategy::CosineIncrease { lo, hi } | Strategy::CosineDecrease { hi, lo } => {
                lo.is_finite() && hi.is_finite()
            }
            Strategy::DirectGrad { lr } => lr.is_finite(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Number of reverse steps `T`.
    pub steps: usize,
    /// Condition `y` in the score network's target space.
    pub condition: f64,
    pub omega0: f64,
    /// Learning rate of the ω ascent.
    pub eta: f64,
    /// ω ascent steps per reverse step.
    pub k_omega: usize,
    pub strategy: Strategy,
}

impl SamplerConfig {
    pub fn new(condition: f64, strategy: Strategy) -> Self {
        SamplerConfig {
            steps: 1000,
            condition,
            omega0: 2.0,
            eta: 0.01,
            k_omega: 1,
            strategy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(RgdError::Config(format!(
                "sampler needs at least 2 steps, got {}",
                self.steps
            )));
        }
        if !(self.condition.is_finite() && self.omega0.is_finite() && self.eta.is_finite()) {
            return Err(RgdError::Config("sampler condition, ω₀ and η must be finite".into()));
        }
        if !self.strategy.params_finite() {
            return Err(RgdError::Config("strategy parameters must be finite".into()));
        }
        if self.strategy == Strategy::Rgd && self.k_omega == 0 {
            return Err(RgdError::Config(
                "rgd needs at least one ω step per diffusion step".into(),
            ));
        }
        Ok(())
    }

    /// Scheduled ω for the update landing on grid index `t` (counting down
    /// from `T-1` to 0), for strategies that do not adapt it.
    fn scheduled_omega(&self, t: usize) -> f64 {
        let ramp =
            |start: f64, end: f64| start + (end - start) * 0.5 * (1.0 + (PI * t as f64 / self.steps as f64).cos());
        match self.strategy {
            Strategy::CosineIncrease { lo, hi } => ramp(lo, hi),
            Strategy::CosineDecrease { hi, lo } => ramp(hi, lo),
            _ => self.omega0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerState {
    pub x: Vec<f64>,
    /// Grid index of `x`; `steps` at the start, 0 when done.
    pub t_index: usize,
    pub omega: f64,
    /// ω used by each committed update, in sampling order.
    pub omega_trajectory: Vec<f64>,
    pub seed: u64,
    /// Steps whose ω derivative was non-finite (ω was kept).
    pub flagged_steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub design: Vec<f64>,
    pub condition: f64,
    pub final_omega: f64,
    pub seed: u64,
    /// Filled in by evaluation.
    pub oracle: Option<f64>,
}

fn combine(cond: &[f64], uncond: &[f64], omega: f64) -> Vec<f64> {
    cond.iter()
        .zip(uncond)
        .map(|(c, u)| (1.0 + omega) * c - omega * u)
        .collect()
}

fn check_finite(v: &[f64], what: &str, t: f64, omega: f64) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(RgdError::non_finite(
            what,
            format!("non-finite value at t={t:.6}, ω={omega:.6e}"),
        ))
    }
}

/// `s̃ = (1+ω)·s(x, y) − ω·s(x)`.
pub fn guided_score<S: ScoreModel + ?Sized>(score: &S, x: &[f64], t: f64, y: f64, omega: f64) -> Result<Vec<f64>> {
    let c = score.score(x, t, Some(y));
    let u = score.score(x, t, None);
    let s = combine(&c, &u, omega);
    check_finite(&s, "guided score", t, omega)?;
    Ok(s)
}

/// Conditional and unconditional scores at the start of a step.
struct Slopes {
    cond: Vec<f64>,
    uncond: Vec<f64>,
}

impl Slopes {
    fn at<S: ScoreModel + ?Sized>(score: &S, x: &[f64], t: f64, y: f64) -> Self {
        Slopes {
            cond: score.score(x, t, Some(y)),
            uncond: score.score(x, t, None),
        }
    }
}

fn heun_with<S: ScoreModel + ?Sized>(
    schedule: &VpSchedule,
    score: &S,
    x: &[f64],
    first: &Slopes,
    t_hi: f64,
    t_lo: f64,
    y: f64,
    omega: f64,
) -> Result<Vec<f64>> {
    let dt = t_lo - t_hi;
    let (b_hi, b_lo) = (0.5 * schedule.beta(t_hi), 0.5 * schedule.beta(t_lo));
    let s1 = combine(&first.cond, &first.uncond, omega);
    let v1: Vec<f64> = x.iter().zip(&s1).map(|(xi, si)| -b_hi * (xi + si)).collect();
    let pred: Vec<f64> = x.iter().zip(&v1).map(|(xi, vi)| xi + dt * vi).collect();
    check_finite(&pred, "heun predictor", t_lo, omega)?;
    let s2 = guided_score(score, &pred, t_lo, y, omega)?;
    let out: Vec<f64> = (0..x.len())
        .map(|i| x[i] + 0.5 * dt * (v1[i] - b_lo * (pred[i] + s2[i])))
        .collect();
    check_finite(&out, "heun corrector", t_lo, omega)?;
    Ok(out)
}

/// One Heun predictor-corrector step of the reverse flow ODE
/// `dx = -½β(t)(x + s̃) dt` from `t_hi` down to `t_lo`.
pub fn heun_step<S: ScoreModel + ?Sized>(
    schedule: &VpSchedule,
    score: &S,
    x: &[f64],
    t_hi: f64,
    t_lo: f64,
    y: f64,
    omega: f64,
) -> Result<Vec<f64>> {
    let first = Slopes::at(score, x, t_hi, y);
    check_finite(&first.cond, "conditional score", t_hi, omega)?;
    check_finite(&first.uncond, "unconditional score", t_hi, omega)?;
    heun_with(schedule, score, x, &first, t_hi, t_lo, y, omega)
}

/// `J(x_t(ω), t_lo)` and its derivative in ω, by forward mode with `dω = 1`.
fn omega_derivative_with<S, P>(
    schedule: &VpSchedule,
    score: &S,
    proxy: &P,
    x: &[f64],
    first: &Slopes,
    t_hi: f64,
    t_lo: f64,
    y: f64,
    omega: f64,
) -> Result<Dual>
where
    S: ScoreModel + ?Sized,
    P: ProxyMean + ?Sized,
{
    let w = Dual::variable(omega);
    let one = Dual::constant(1.0);
    let dt = t_lo - t_hi;
    let (b_hi, b_lo) = (0.5 * schedule.beta(t_hi), 0.5 * schedule.beta(t_lo));
    let v1: Vec<Dual> = (0..x.len())
        .map(|i| ((one + w) * first.cond[i] - w * first.uncond[i] + x[i]) * (-b_hi))
        .collect();
    let pred: Vec<Dual> = v1.iter().zip(x).map(|(&v, &xi)| v * dt + xi).collect();
    let c2 = score.score_dual(&pred, t_lo, Some(y));
    let u2 = score.score_dual(&pred, t_lo, None);
    let x_new: Vec<Dual> = (0..x.len())
        .map(|i| {
            let s2 = (one + w) * c2[i] - w * u2[i];
            let v2 = (pred[i] + s2) * (-b_lo);
            (v1[i] + v2) * (0.5 * dt) + x[i]
        })
        .collect();
    proxy_at_time_dual(proxy, schedule, score, &x_new, t_lo)
}

/// `d/dω J(heun_step(x, ω), t_lo)`, returned with the value.
pub fn omega_derivative<S, P>(
    schedule: &VpSchedule,
    score: &S,
    proxy: &P,
    x: &[f64],
    t_hi: f64,
    t_lo: f64,
    y: f64,
    omega: f64,
) -> Result<(f64, f64)>
where
    S: ScoreModel + ?Sized,
    P: ProxyMean + ?Sized,
{
    let first = Slopes::at(score, x, t_hi, y);
    let d = omega_derivative_with(schedule, score, proxy, x, &first, t_hi, t_lo, y, omega)?;
    Ok((d.v, d.t))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaUpdate {
    pub omega: f64,
    /// Set when a derivative was non-finite and ω was kept.
    pub flagged: bool,
}

fn optimize_omega_with<S, P>(
    schedule: &VpSchedule,
    score: &S,
    proxy: &P,
    x: &[f64],
    first: &Slopes,
    t_hi: f64,
    t_lo: f64,
    cfg: &SamplerConfig,
    omega: f64,
) -> Result<OmegaUpdate>
where
    S: ScoreModel + ?Sized,
    P: ProxyMean + ?Sized,
{
    let mut w = omega;
    for _ in 0..cfg.k_omega {
        let g = omega_derivative_with(schedule, score, proxy, x, first, t_hi, t_lo, cfg.condition, w)?.t;
        let next = w + cfg.eta * g;
        if !g.is_finite() || !next.is_finite() {
            return Ok(OmegaUpdate {
                omega: w,
                flagged: true,
            });
        }
        w = next;
    }
    Ok(OmegaUpdate {
        omega: w,
        flagged: false,
    })
}

/// `k_omega` ascent steps `ω ← ω + η·dJ/dω` at the state `x` on grid step
/// `t_hi → t_lo`.
pub fn optimize_omega<S, P>(
    schedule: &VpSchedule,
    score: &S,
    proxy: &P,
    x: &[f64],
    t_hi: f64,
    t_lo: f64,
    cfg: &SamplerConfig,
    omega: f64,
) -> Result<OmegaUpdate>
where
    S: ScoreModel + ?Sized,
    P: ProxyMean + ?Sized,
{
    let first = Slopes::at(score, x, t_hi, cfg.condition);
    optimize_omega_with(schedule, score, proxy, x, &first, t_hi, t_lo, cfg, omega)
}

impl SamplerState {
    pub fn start(x_t: Vec<f64>, cfg: &SamplerConfig, seed: u64) -> Self {
        SamplerState {
            x: x_t,
            t_index: cfg.steps,
            omega: cfg.omega0,
            omega_trajectory: Vec::with_capacity(cfg.steps),
            seed,
            flagged_steps: Vec::new(),
        }
    }

    pub fn is_done(&self) -> bool {
        self.t_index == 0
    }

    /// Advances one grid step: choose ω, then commit the Heun update.
    pub fn step<S, P>(
        &mut self,
        schedule: &VpSchedule,
        score: &S,
        proxy: &P,
        cfg: &SamplerConfig,
        grid: &[f64],
    ) -> Result<()>
    where
        S: ScoreModel + ?Sized,
        P: ProxyMean + ?Sized,
    {
        assert!(!self.is_done(), "chain already finished");
        let target = self.t_index - 1;
        let (t_hi, t_lo) = (grid[self.t_index], grid[target]);
        let y = cfg.condition;
        let first = Slopes::at(score, &self.x, t_hi, y);
        check_finite(&first.cond, "conditional score", t_hi, self.omega)?;
        check_finite(&first.uncond, "unconditional score", t_hi, self.omega)?;
        match cfg.strategy {
            Strategy::Rgd => {
                let up = optimize_omega_with(schedule, score, proxy, &self.x, &first, t_hi, t_lo, cfg, self.omega)?;
                if up.flagged {
                    self.flagged_steps.push(target);
                }
                self.omega = up.omega;
            }
            Strategy::FixedOmega | Strategy::DirectGrad { .. } => {}
            Strategy::CosineIncrease { .. } | Strategy::CosineDecrease { .. } => {
                self.omega = cfg.scheduled_omega(target);
            }
        }
        let mut next = heun_with(schedule, score, &self.x, &first, t_hi, t_lo, y, self.omega)?;
        if let Strategy::DirectGrad { lr } = cfg.strategy {
            let g = proxy_at_time_grad(proxy, schedule, score, &next, t_lo)?;
            for (xi, gi) in next.iter_mut().zip(&g) {
                *xi += lr * gi;
            }
            check_finite(&next, "direct gradient update", t_lo, self.omega)?;
        }
        self.x = next;
        self.omega_trajectory.push(self.omega);
        self.t_index = target;
        Ok(())
    }
}

pub fn initial_noise(seed: u64, dim: usize) -> Vec<f64> {
    rng::normal_vec(&mut rng::stream(seed, STREAM_CHAIN, 0), dim)
}

/// Runs one chain from `x_T ~ N(0, I)` drawn from `seed`.
pub fn sample_chain<S, P>(
    score: &S,
    schedule: &VpSchedule,
    proxy: &P,
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<(Candidate, SamplerState)>
where
    S: ScoreModel + ?Sized,
    P: ProxyMean + ?Sized,
{
    cfg.validate()?;
    let grid = schedule.time_grid(cfg.steps);
    let mut state = SamplerState::start(initial_noise(seed, score.dim()), cfg, seed);
    while !state.is_done() {
        state.step(schedule, score, proxy, cfg, &grid)?;
    }
    let candidate = Candidate {
        design: state.x.clone(),
        condition: cfg.condition,
        final_omega: state.omega,
        seed,
        oracle: None,
    };
    Ok((candidate, state))
}

#[derive(Debug)]
pub struct BatchOutput {
    /// One entry per chain, in seed order.
    pub chains: Vec<Result<(Candidate, SamplerState)>>,
}

impl BatchOutput {
    pub fn candidates(&self) -> Vec<Candidate> {
        self.chains
            .iter()
            .filter_map(|c| c.as_ref().ok().map(|(cand, _)| cand.clone()))
            .collect()
    }

    pub fn states(&self) -> Vec<&SamplerState> {
        self.chains
            .iter()
            .filter_map(|c| c.as_ref().ok().map(|(_, s)| s))
            .collect()
    }

    pub fn failures(&self) -> Vec<(usize, String)> {
        self.chains
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.as_ref().err().map(|e| (i, e.to_string())))
            .collect()
    }
}

/// Chains with seeds `base_seed + i`; output is independent of `workers`.
pub fn sample_batch<S, P>(
    score: &S,
    schedule: &VpSchedule,
    proxy: &P,
    cfg: &SamplerConfig,
    n_chains: usize,
    base_seed: u64,
    workers: usize,
) -> Result<BatchOutput>
where
    S: ScoreModel + ?Sized,
    P: ProxyMean + ?Sized,
{
    if n_chains == 0 {
        return Err(RgdError::Config("need at least one chain".into()));
    }
    cfg.validate()?;
    let chains = parallel::map_indexed(n_chains, workers, |i| {
        sample_chain(score, schedule, proxy, cfg, base_seed.wrapping_add(i as u64))
    });
    let out = BatchOutput { chains };
    if out.chains.iter().all(|c| c.is_err()) {
        let first = out.failures().into_iter().next().map(|(_, e)| e).unwrap_or_default();
        return Err(RgdError::AllChainsFailed(first));
    }
    Ok(out)
}

/// Dual-valued proxy composite used by tests and diagnostics.
pub fn proxy_after_step<S, P>(
    schedule: &VpSchedule,
    score: &S,
    proxy: &P,
    x: &[f64],
    t_hi: f64,
    t_lo: f64,
    y: f64,
    omega: f64,
) -> Result<f64>
where
    S: ScoreModel + ?Sized,
    P: ProxyMean + ?Sized,
{
    let next = heun_step(schedule, score, x, t_hi, t_lo, y, omega)?;
    Ok(proxy
        .predict_dual(&dual::constants(&crate::proxy::tweedie_x0(
            schedule, score, &next, t_lo,
        )?))
        .v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{GaussianDataScore, ScoreNet};
    use crate::proxy::ProxyModel;

    struct Stub {
        cond: Vec<f64>,
        uncond: Vec<f64>,
    }
    impl ScoreModel for Stub {
        fn dim(&self) -> usize {
            self.cond.len()
        }
        fn score_dual(&self, x: &[Dual], _t: f64, c: Option<f64>) -> Vec<Dual> {
            let src = if c.is_some() { &self.cond } else { &self.uncond };
            x.iter().zip(src).map(|(_, &v)| Dual::constant(v)).collect()
        }
    }

    struct Zero(usize);
    impl ScoreModel for Zero {
        fn dim(&self) -> usize {
            self.0
        }
        fn score_dual(&self, x: &[Dual], _t: f64, _c: Option<f64>) -> Vec<Dual> {
            vec![Dual::constant(0.0); x.len()]
        }
    }

    struct Mean;
    impl ProxyMean for Mean {
        fn dim(&self) -> usize {
            2
        }
        fn predict_dual(&self, x: &[Dual]) -> Dual {
            x.iter().fold(Dual::constant(0.0), |a, &b| a + b)
        }
    }

    #[test]
    fn guided_score_endpoints_and_arithmetic() {
        let stub = Stub {
            cond: vec![1.0, 0.0],
            uncond: vec![0.0, 1.0],
        };
        assert_eq!(
            guided_score(&stub, &[0.0, 0.0], 0.5, 1.0, 2.0).unwrap(),
            vec![3.0, -2.0]
        );
        let net = ScoreNet::new(2, &[8], 2, VpSchedule::default(), (0.0, 1.0), 1);
        let x = [0.3, -0.2];
        assert_eq!(
            guided_score(&net, &x, 0.4, 0.7, 0.0).unwrap(),
            net.score(&x, 0.4, Some(0.7))
        );
        assert_eq!(
            guided_score(&net, &x, 0.4, 0.7, -1.0).unwrap(),
            net.score(&x, 0.4, None)
        );
    }

    #[test]
    fn guided_score_is_affine_in_omega() {
        let net = ScoreNet::new(3, &[8], 2, VpSchedule::default(), (0.0, 1.0), 2);
        let x = [0.3, -0.2, 1.0];
        for (w1, w2) in [(0.0, 2.0), (-1.0, 4.0), (0.37, 1.9)] {
            let a = guided_score(&net, &x, 0.3, 0.5, w1).unwrap();
            let b = guided_score(&net, &x, 0.3, 0.5, w2).unwrap();
            let m = guided_score(&net, &x, 0.3, 0.5, 0.5 * (w1 + w2)).unwrap();
            for i in 0..3 {
                assert!((a[i] + b[i] - 2.0 * m[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_score_step_matches_linear_ode() {
        let s = VpSchedule::default();
        let x = [0.8, -1.3];
        let err = |t_hi: f64, dt: f64| {
            let out = heun_step(&s, &Zero(2), &x, t_hi, t_hi - dt, 0.0, 2.0).unwrap();
            let factor = (0.5 * s.beta_integral(t_hi - dt, t_hi)).exp();
            (0..2).map(|i| (out[i] - x[i] * factor).abs()).fold(0.0, f64::max)
        };
        for t_hi in [0.05, 0.15, 0.3] {
            assert!(err(t_hi, 1e-3) < 1e-8, "t={t_hi}: {}", err(t_hi, 1e-3));
        }
        // Where β is large the local error is still cubic in the step.
        let ratio = err(1.0, 2e-3) / err(1.0, 1e-3);
        assert!((7.0..=9.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn zero_length_step_is_identity() {
        let net = ScoreNet::new(2, &[8], 2, VpSchedule::default(), (0.0, 1.0), 3);
        let x = vec![0.4, 0.1];
        assert_eq!(
            heun_step(&VpSchedule::default(), &net, &x, 0.5, 0.5, 1.0, 2.0).unwrap(),
            x
        );
    }

    fn integrate<S: ScoreModel>(s: &VpSchedule, score: &S, x: &[f64], n: usize) -> Vec<f64> {
        let (a, b) = (0.2, 0.8);
        let mut x = x.to_vec();
        for k in 0..n {
            let hi = b - (b - a) * k as f64 / n as f64;
            let lo = b - (b - a) * (k + 1) as f64 / n as f64;
            x = heun_step(s, score, &x, hi, lo, 0.0, 0.0).unwrap();
        }
        x
    }

    #[test]
    fn heun_is_second_order() {
        let s = VpSchedule::default();
        let score = GaussianDataScore {
            schedule: s,
            mean: vec![0.5, -0.2],
            var: 2.0,
        };
        let x = [1.1, -0.7];
        let reference = integrate(&s, &score, &x, 400);
        let err = |n| {
            integrate(&s, &score, &x, n)
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(20) / err(40);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn standard_normal_transport_keeps_moments() {
        let s = VpSchedule::default();
        let score = GaussianDataScore::standard(s, 2);
        let cfg = SamplerConfig {
            steps: 20,
            ..SamplerConfig::new(0.0, Strategy::FixedOmega)
        };
        let n = 10_000;
        let out = sample_batch(&score, &s, &Mean, &cfg, n, 0, 1).unwrap().candidates();
        for j in 0..2 {
            let v: Vec<f64> = out.iter().map(|c| c.design[j]).collect();
            let (m, sd) = crate::data::mean_std(&v);
            let se_mean = 1.0 / (n as f64).sqrt();
            let se_var = (2.0 / n as f64).sqrt();
            assert!(m.abs() < 3.0 * se_mean, "mean {m}");
            assert!((sd * sd - 1.0).abs() < 3.0 * se_var, "var {}", sd * sd);
        }
    }

    #[test]
    fn omega_derivative_matches_finite_differences() {
        let s = VpSchedule::default();
        let net = ScoreNet::new(3, &[16, 16], 3, s, (0.0, 1.0), 5);
        let proxy = ProxyModel::new(3, &[16, 16], 6);
        let x = [0.4, -0.9, 0.2];
        for (t_hi, t_lo) in [(0.9, 0.85), (0.3, 0.29), (0.002, 0.001)] {
            let (_, g) = omega_derivative(&s, &net, &proxy, &x, t_hi, t_lo, 1.2, 2.0).unwrap();
            let h = 1e-4;
            let f = |w| proxy_after_step(&s, &net, &proxy, &x, t_hi, t_lo, 1.2, w).unwrap();
            let fd = (f(2.0 + h) - f(2.0 - h)) / (2.0 * h);
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-4, "t={t_hi}: {g} vs {fd}");
        }
    }

    /// Constant scores make `x_t(ω) = A + Bω`; the proxy undoes that map so
    /// `J(x_t(ω)) = -(ω - 3)²`.
    #[test]
    fn rigged_quadratic_gives_exact_update() {
        let s = VpSchedule::default();
        let stub = Stub {
            cond: vec![0.7],
            uncond: vec![0.0],
        };
        let (t_hi, t_lo) = (0.6, 0.55);
        let x = [0.3];
        let a = heun_step(&s, &stub, &x, t_hi, t_lo, 1.0, 0.0).unwrap()[0];
        let b = heun_step(&s, &stub, &x, t_hi, t_lo, 1.0, 1.0).unwrap()[0] - a;
        let m = s.mean_coef(t_lo);
        struct Rigged {
            a: f64,
            b: f64,
            m: f64,
        }
        impl ProxyMean for Rigged {
            fn dim(&self) -> usize {
                1
            }
            fn predict_dual(&self, x: &[Dual]) -> Dual {
                let w = (x[0] * self.m - self.a) / self.b - 3.0;
                -(w * w)
            }
        }
        let proxy = Rigged { a, b, m };
        let cfg = SamplerConfig {
            eta: 0.1,
            ..SamplerConfig::new(1.0, Strategy::Rgd)
        };
        let up = optimize_omega(&s, &stub, &proxy, &x, t_hi, t_lo, &cfg, 2.0).unwrap();
        assert!((up.omega - 2.2).abs() < 1e-9, "{}", up.omega);
        let frozen = SamplerConfig { eta: 0.0, ..cfg };
        assert_eq!(
            optimize_omega(&s, &stub, &proxy, &x, t_hi, t_lo, &frozen, 2.0)
                .unwrap()
                .omega,
            2.0
        );
    }

    fn small_models() -> (VpSchedule, ScoreNet, ProxyModel) {
        let s = VpSchedule::default();
        (
            s,
            ScoreNet::new(2, &[12], 2, s, (0.0, 1.0), 8),
            ProxyModel::new(2, &[12], 9),
        )
    }

    #[test]
    fn rgd_without_learning_rate_is_fixed_omega() {
        let (s, net, proxy) = small_models();
        let rgd = SamplerConfig {
            steps: 30,
            eta: 0.0,
            ..SamplerConfig::new(0.5, Strategy::Rgd)
        };
        let fixed = SamplerConfig {
            strategy: Strategy::FixedOmega,
            ..rgd
        };
        for seed in 0..3 {
            let (a, sa) = sample_chain(&net, &s, &proxy, &rgd, seed).unwrap();
            let (b, _) = sample_chain(&net, &s, &proxy, &fixed, seed).unwrap();
            assert_eq!(a, b);
            assert!(sa.omega_trajectory.iter().all(|&w| w == 2.0));
        }
    }

    #[test]
    fn chains_are_deterministic_and_worker_independent() {
        let (s, net, proxy) = small_models();
        let cfg = SamplerConfig {
            steps: 12,
            ..SamplerConfig::new(0.5, Strategy::Rgd)
        };
        let a = sample_batch(&net, &s, &proxy, &cfg, 6, 40, 1).unwrap();
        let b = sample_batch(&net, &s, &proxy, &cfg, 6, 40, 4).unwrap();
        assert_eq!(a.candidates(), b.candidates());
        assert_eq!(a.states(), b.states());
        let single = sample_batch(&net, &s, &proxy, &cfg, 1, 40, 1).unwrap();
        assert_eq!(
            single.candidates()[0],
            sample_chain(&net, &s, &proxy, &cfg, 40).unwrap().0
        );
        for st in a.states() {
            assert_eq!(st.omega_trajectory.len(), 12);
        }
    }

    #[test]
    fn cosine_schedules_run_between_their_endpoints() {
        let (s, net, proxy) = small_models();
        let inc = SamplerConfig {
            steps: 40,
            ..SamplerConfig::new(0.5, Strategy::CosineIncrease { lo: 0.0, hi: 4.0 })
        };
        let (_, st) = sample_chain(&net, &s, &proxy, &inc, 1).unwrap();
        let w = &st.omega_trajectory;
        assert!(w[0] < 0.05 && (w[39] - 4.0).abs() < 1e-12);
        assert!(w.windows(2).all(|p| p[1] >= p[0]));
        let dec = SamplerConfig {
            strategy: Strategy::CosineDecrease { hi: 4.0, lo: 0.0 },
            ..inc
        };
        let (_, st) = sample_chain(&net, &s, &proxy, &dec, 1).unwrap();
        let w = &st.omega_trajectory;
        assert!(w[0] > 3.95 && w[39].abs() < 1e-12);
        assert!(w.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn direct_grad_moves_design_along_proxy() {
        let (s, net, proxy) = small_models();
        let fixed = SamplerConfig {
            steps: 10,
            ..SamplerConfig::new(0.5, Strategy::FixedOmega)
        };
        let direct = SamplerConfig {
            strategy: Strategy::DirectGrad { lr: 0.1 },
            ..fixed
        };
        let (a, _) = sample_chain(&net, &s, &proxy, &fixed, 3).unwrap();
        let (b, sb) = sample_chain(&net, &s, &proxy, &direct, 3).unwrap();
        assert_ne!(a.design, b.design);
        assert!(sb.omega_trajectory.iter().all(|&w| w == 2.0));
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!(Strategy::parse("rgd").unwrap(), Strategy::Rgd);
        assert_eq!(
            Strategy::parse("direct_grad").unwrap(),
            Strategy::DirectGrad { lr: 0.1 }
        );
        assert_eq!(
            Strategy::parse("cosine_increase:1,3").unwrap(),
            Strategy::CosineIncrease { lo: 1.0, hi: 3.0 }
        );
        assert!(Strategy::parse("rgd:1").is_err());
        assert!(Strategy::parse("annealed").is_err());
        assert!(Strategy::parse("cosine_decrease:1").is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = SamplerConfig::new(0.0, Strategy::Rgd);
        c.steps = 1;
        assert!(c.validate().is_err());
        let mut c = SamplerConfig::new(0.0, Strategy::Rgd);
        c.k_omega = 0;
        assert!(c.validate().is_err());
        assert!(SamplerConfig::new(f64::NAN, Strategy::Rgd).validate().is_err());
    }
}
