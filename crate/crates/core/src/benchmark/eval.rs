use serde::{Deserialize, Serialize};

use super::dataset::OfflineDataset;
use super::task::{normalize, Task};
use crate::error::{Result, RgdError};
use crate::parallel;

pub const DEFAULT_BUDGET: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    pub scores: Vec<f64>,
    pub normalized: Vec<f64>,
    /// 100th percentile of the normalized scores.
    pub max: f64,
    /// 50th percentile of the normalized scores.
    pub median: f64,
    pub best_index: usize,
    pub y_min_ref: f64,
    pub y_max_true: f64,
    pub seed: u64,
    pub config_digest: String,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Scores raw-space designs with the oracle and summarizes their normalized
/// scores. `designs.len()` must equal `budget`.
pub fn evaluate(
    designs: &[Vec<f64>],
    task: &Task,
    dataset: &OfflineDataset,
    budget: usize,
    seed: u64,
    config_digest: &str,
    workers: usize,
) -> Result<EvalReport> {
    if designs.len() != budget {
        return Err(RgdError::Config(format!(
            "expected {budget} candidates, got {}",
            designs.len()
        )));
    }
    if budget == 0 {
        return Err(RgdError::Config("evaluation budget must be positive".into()));
    }
    if let Some(bad) = designs.iter().position(|d| d.len() != task.dim) {
        return Err(RgdError::Config(format!(
            "candidate {bad} has {} coordinates, task has {}",
            designs[bad].len(),
            task.dim
        )));
    }
    let (lo, hi) = (dataset.meta.y_min_ref, dataset.meta.y_max_true);
    let scores = parallel::map_slice(designs, workers, |d| task.oracle(d));
    let normalized = scores
        .iter()
        .map(|&s| normalize(s, lo, hi))
        .collect::<Result<Vec<f64>>>()?;
    let best_index = argmax(&scores);
    Ok(EvalReport {
        count: budget,
        max: normalized.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        median: median(&normalized),
        best_index,
        scores,
        normalized,
        y_min_ref: lo,
        y_max_true: hi,
        seed,
        config_digest: config_digest.to_string(),
    })
}
