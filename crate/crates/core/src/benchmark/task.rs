use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RgdError};

thread_local! {
    static ORACLE_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Oracle evaluations made on the current thread so far.
pub fn oracle_calls_on_this_thread() -> u64 {
    ORACLE_CALLS.with(|c| c.get())
}

/// Chained negative Rosenbrock, `-Σ (1-x_i)² + 100(x_{i+1} - x_i²)²`.
pub fn rosenbrock(x: &[f64]) -> f64 {
    ORACLE_CALLS.with(|c| c.set(c.get() + 1));
    -x.windows(2)
        .map(|w| (1.0 - w[0]).powi(2) + 100.0 * (w[1] - w[0] * w[0]).powi(2))
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub name: String,
    pub dim: usize,
    /// Per-coordinate search box.
    pub lo: f64,
    pub hi: f64,
    /// Best achievable oracle value.
    pub y_max_true: f64,
}

impl Task {
    pub fn rosenbrock(dim: usize) -> Self {
        Task {
            name: "rosenbrock".into(),
            dim,
            lo: -2.0,
            hi: 2.0,
            y_max_true: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name != "rosenbrock" {
            return Err(RgdError::Config(format!("unknown task {:?}", self.name)));
        }
        if self.dim < 2 {
            return Err(RgdError::Config("rosenbrock needs at least two coordinates".into()));
        }
        if !(self.lo < self.hi) {
            return Err(RgdError::Config(format!("empty search box [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }

    pub fn oracle(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "design dimension mismatch");
        rosenbrock(x)
    }
}

/// `(y - y_min) / (y_max - y_min)`, not clipped.
pub fn normalize(y: f64, y_min_ref: f64, y_max_true: f64) -> Result<f64> {
    let range = y_max_true - y_min_ref;
    if !(range > 0.0 && range.is_finite()) {
        return Err(RgdError::Config(format!(
            "degenerate normalization range [{y_min_ref}, {y_max_true}]"
        )));
    }
    Ok((y - y_min_ref) / range)
}
