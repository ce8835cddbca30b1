//! Log-density of a design by integrating the probability-flow ODE together
//! with the divergence of its velocity field.

use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::diffusion::{ScoreModel, VpSchedule};
use crate::error::{Result, RgdError};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Divergence {
    /// Trace of the Jacobian from one directional derivative per coordinate.
    Exact,
    /// Rademacher-probe estimate; probes are shared by every solve that uses
    /// the same `probe_seed`, so differences between solves are smooth.
    Hutchinson { probes: usize, probe_seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowOdeConfig {
    pub ode_steps: usize,
    pub divergence: Divergence,
}

impl Default for FlowOdeConfig {
    fn default() -> Self {
        FlowOdeConfig {
            ode_steps: 100,
            divergence: Divergence::Exact,
        }
    }
}

impl FlowOdeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ode_steps < 10 {
            return Err(RgdError::Config(format!(
                "ode_steps must be at least 10, got {}",
                self.ode_steps
            )));
        }
        if let Divergence::Hutchinson { probes: 0, .. } = self.divergence {
            return Err(RgdError::Config(
                "hutchinson divergence needs at least one probe".into(),
            ));
        }
        Ok(())
    }
}

/// Velocity `f̃ = -½β(x + s)` of the flow ODE and its divergence.
fn velocity_and_divergence<S: ScoreModel + ?Sized>(
    score: &S,
    schedule: &VpSchedule,
    x: &[f64],
    t: f64,
    condition: Option<f64>,
    probes: Option<&[f64]>,
) -> (Vec<f64>, f64) {
    let d = x.len();
    let half_beta = 0.5 * schedule.beta(t);
    let (s, trace) = match probes {
        None => {
            let mut basis = vec![0.0; d * d];
            for i in 0..d {
                basis[i * d + i] = 1.0;
            }
            let (s, cols) = score.score_jvps(x, t, condition, &basis);
            let trace = (0..d).map(|i| cols[i * d + i]).sum::<f64>();
            (s, trace)
        }
        Some(z) => {
            let k = z.len() / d;
            let (s, jz) = score.score_jvps(x, t, condition, z);
            let quad: f64 = z.iter().zip(&jz).map(|(a, b)| a * b).sum();
            (s, quad / k as f64)
        }
    };
    let v = x.iter().zip(&s).map(|(xi, si)| -half_beta * (xi + si)).collect();
    (v, -half_beta * (d as f64 + trace))
}

fn rademacher(probe_seed: u64, index: u64, n: usize) -> Vec<f64> {
    let mut r = rng::stream(probe_seed, rng::STREAM_HUTCHINSON, index);
    (0..n).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

pub fn standard_normal_logpdf(x: &[f64]) -> f64 {
    -0.5 * x.iter().map(|v| v * v).sum::<f64>() - 0.5 * x.len() as f64 * (2.0 * PI).ln()
}

/// `log p(x₀) = log N(x₁; 0, I) + ∫ div f̃ dt`, integrated by Heun steps on a
/// uniform grid over `[t_eps, 1]`.
pub fn log_density<S: ScoreModel + ?Sized>(
    score: &S,
    schedule: &VpSchedule,
    x0: &[f64],
    condition: Option<f64>,
    cfg: &FlowOdeConfig,
) -> Result<f64> {
    cfg.validate()?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(RgdError::non_finite("log_density", "non-finite input design"));
    }
    let d = x0.len();
    let grid = schedule.time_grid(cfg.ode_steps);
    let mut x = x0.to_vec();
    let mut integral = 0.0;
    for k in 0..cfg.ode_steps {
        let (t0, t1) = (grid[k], grid[k + 1]);
        let h = t1 - t0;
        let probes = match cfg.divergence {
            Divergence::Exact => None,
            Divergence::Hutchinson { probes, probe_seed } => Some(rademacher(probe_seed, k as u64, probes * d)),
        };
        let (v0, div0) = velocity_and_divergence(score, schedule, &x, t0, condition, probes.as_deref());
        let pred: Vec<f64> = x.iter().zip(&v0).map(|(a, b)| a + h * b).collect();
        let (v1, div1) = velocity_and_divergence(score, schedule, &pred, t1, condition, probes.as_deref());
        for i in 0..d {
            x[i] += 0.5 * h * (v0[i] + v1[i]);
        }
        integral += 0.5 * h * (div0 + div1);
        if !integral.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(RgdError::non_finite(
                "log_density",
                format!("state diverged at step {k} (t={t1})"),
            ));
        }
    }
    Ok(standard_normal_logpdf(&x) + integral)
}
