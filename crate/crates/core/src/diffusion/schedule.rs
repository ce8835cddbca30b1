use serde::{Deserialize, Serialize};

use crate::error::{Result, RgdError};

/// Variance-preserving SDE with a linear noise rate on `t ∈ [0, 1]`.
///
/// `dx = -½β(t)x dt + √β(t) dw`, perturbation kernel
/// `x_t = μ(t)x₀ + σ(t)ε` with `μ(t)² + σ(t)² = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VpSchedule {
    pub beta_min: f64,
    pub beta_max: f64,
    /// Smallest time used for training, sampling and likelihoods.
    pub t_eps: f64,
}

impl Default for VpSchedule {
    fn default() -> Self {
        VpSchedule {
            beta_min: 0.1,
            beta_max: 20.0,
            t_eps: 1e-3,
        }
    }
}

impl VpSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_min > 0.0 && self.beta_max > self.beta_min) {
            return Err(RgdError::Config(format!(
                "need 0 < beta_min < beta_max, got {} and {}",
                self.beta_min, self.beta_max
            )));
        }
        if !(self.t_eps > 0.0 && self.t_eps < 1.0) {
            return Err(RgdError::Config(format!("t_eps {} outside (0, 1)", self.t_eps)));
        }
        Ok(())
    }

    pub fn beta(&self, t: f64) -> f64 {
        self.beta_min + t * (self.beta_max - self.beta_min)
    }

    /// `∫_a^b β(s) ds`.
    pub fn beta_integral(&self, a: f64, b: f64) -> f64 {
        self.beta_min * (b - a) + 0.5 * (self.beta_max - self.beta_min) * (b * b - a * a)
    }

    pub fn diffusion(&self, t: f64) -> f64 {
        self.beta(t).sqrt()
    }

    /// Drift `f(x, t) = -½β(t)x`.
    pub fn drift(&self, x: &[f64], t: f64) -> Vec<f64> {
        let c = -0.5 * self.beta(t);
        x.iter().map(|v| c * v).collect()
    }

    fn log_mean_coef(&self, t: f64) -> f64 {
        -0.25 * t * t * (self.beta_max - self.beta_min) - 0.5 * t * self.beta_min
    }

    pub fn mean_coef(&self, t: f64) -> f64 {
        self.log_mean_coef(t).exp()
    }

    pub fn variance(&self, t: f64) -> f64 {
        -(2.0 * self.log_mean_coef(t)).exp_m1()
    }

    pub fn std(&self, t: f64) -> f64 {
        self.variance(t).sqrt()
    }

    /// `x_t = μ(t)x₀ + σ(t)ε`. Accepts the closed interval `[0, 1]`.
    pub fn perturb(&self, x0: &[f64], t: f64, noise: &[f64]) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&t) {
            return Err(RgdError::Config(format!("perturbation time {t} outside [0, 1]")));
        }
        assert_eq!(x0.len(), noise.len(), "noise dimension mismatch");
        let (m, s) = (self.mean_coef(t), self.std(t));
        Ok(x0.iter().zip(noise).map(|(x, e)| m * x + s * e).collect())
    }

    pub(crate) fn check_time(&self, t: f64, context: &str) -> Result<()> {
        if t.is_finite() && t >= self.t_eps - 1e-12 && t <= 1.0 + 1e-12 {
            Ok(())
        } else {
            Err(RgdError::Config(format!(
                "{context}: time {t} outside [{}, 1]",
                self.t_eps
            )))
        }
    }

    /// Uniform grid of `steps + 1` times from `t_eps` to 1.
    pub fn time_grid(&self, steps: usize) -> Vec<f64> {
        (0..=steps)
            .map(|i| self.t_eps + (1.0 - self.t_eps) * i as f64 / steps as f64)
            .collect()
    }
}
