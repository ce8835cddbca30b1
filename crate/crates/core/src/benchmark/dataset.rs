//! Offline datasets drawn from the low-scoring part of a task's search box.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::task::{normalize, Task};
use crate::binio;
use crate::data::{mean_std, DataView};
use crate::error::{Result, RgdError};
use crate::rng;

const STREAM_POOL: u64 = 9;

pub const DESIGNS_FILE: &str = "designs.bin";
pub const SCORES_FILE: &str = "scores.bin";
pub const SIDECAR_FILE: &str = "dataset.json";

/// Everything about a dataset except the arrays themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub task: Task,
    pub rows: usize,
    pub dim: usize,
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
    pub y_min_ref: f64,
    pub y_max_true: f64,
    pub cap: f64,
    pub pool_size: usize,
    pub seed: u64,
    pub format: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    pub meta: DatasetMeta,
    /// Raw designs, `rows × dim`.
    pub x: Vec<f64>,
    /// Raw oracle scores.
    pub y: Vec<f64>,
}

fn column_stats(x: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let rows = x.len() / dim;
    let mut mean = vec![0.0; dim];
    let mut sd = vec![0.0; dim];
    let mut col = vec![0.0; rows];
    for j in 0..dim {
        for i in 0..rows {
            col[i] = x[i * dim + j];
        }
        let (m, s) = mean_std(&col);
        mean[j] = m;
        sd[j] = if s > 0.0 { s } else { 1.0 };
    }
    (mean, sd)
}

/// Samples `pool_size` uniform designs, fixes the normalization floor at the
/// pool minimum and keeps the first `n` designs whose normalized score is at
/// most `cap`.
pub fn generate_dataset(task: &Task, n: usize, cap: f64, pool_size: usize, seed: u64) -> Result<OfflineDataset> {
    task.validate()?;
    if !(cap > 0.0 && cap <= 1.0) {
        return Err(RgdError::Config(format!("cap must lie in (0, 1], got {cap}")));
    }
    if n == 0 || n > pool_size {
        return Err(RgdError::Config(format!(
            "dataset size {n} must be positive and at most the pool size {pool_size}"
        )));
    }
    let d = task.dim;
    let mut r = rng::stream(seed, STREAM_POOL, 0);
    let mut pool = vec![0.0; pool_size * d];
    for v in pool.iter_mut() {
        *v = r.random_range(task.lo..task.hi);
    }
    let scores: Vec<f64> = pool.chunks(d).map(|row| task.oracle(row)).collect();
    let y_min_ref = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for (row, &s) in pool.chunks(d).zip(&scores) {
        if y.len() == n {
            break;
        }
        if normalize(s, y_min_ref, task.y_max_true)? <= cap {
            x.extend_from_slice(row);
            y.push(s);
        }
    }
    if y.len() < n {
        return Err(RgdError::InsufficientPool {
            found: y.len(),
            wanted: n,
            cap,
        });
    }
    Ok(OfflineDataset::from_parts(
        task.clone(),
        x,
        y,
        y_min_ref,
        cap,
        pool_size,
        seed,
    ))
}

impl OfflineDataset {
    pub fn from_parts(
        task: Task,
        x: Vec<f64>,
        y: Vec<f64>,
        y_min_ref: f64,
        cap: f64,
        pool_size: usize,
        seed: u64,
    ) -> Self {
        let dim = task.dim;
        let (x_mean, x_std) = column_stats(&x, dim);
        let (y_mean, y_sd) = mean_std(&y);
        let meta = DatasetMeta {
            rows: y.len(),
            dim,
            x_mean,
            x_std,
            y_mean,
            y_std: if y_sd > 0.0 { y_sd } else { 1.0 },
            y_min_ref,
            y_max_true: task.y_max_true,
            cap,
            pool_size,
            seed,
            format: "f64-le".into(),
            task,
        };
        OfflineDataset { meta, x, y }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.meta.dim
    }

    pub fn view(&self) -> DataView<'_> {
        DataView::new(&self.x, &self.y, self.meta.dim)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.view().row(i)
    }

    /// Largest stored score (the default sampling condition).
    pub fn y_max(&self) -> f64 {
        self.y.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn normalized(&self, y: f64) -> Result<f64> {
        normalize(y, self.meta.y_min_ref, self.meta.y_max_true)
    }

    pub fn normalized_max(&self) -> Result<f64> {
        self.normalized(self.y_max())
    }

    pub fn x_to_model(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.meta.x_mean.iter().zip(&self.meta.x_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn x_from_model(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.meta.x_mean.iter().zip(&self.meta.x_std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn y_to_model(&self, y: f64) -> f64 {
        (y - self.meta.y_mean) / self.meta.y_std
    }

    pub fn y_from_model(&self, z: f64) -> f64 {
        z * self.meta.y_std + self.meta.y_mean
    }

    /// Standardized copy of the designs and scores.
    pub fn model_space(&self) -> (Vec<f64>, Vec<f64>) {
        let x = self.x.chunks(self.dim()).flat_map(|r| self.x_to_model(r)).collect();
        let y = self.y.iter().map(|&v| self.y_to_model(v)).collect();
        (x, y)
    }

    /// Indices of the `k` highest scores, best first; ties keep row order.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.y[b].total_cmp(&self.y[a]).then(a.cmp(&b)));
        idx.truncate(k);
        idx
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        binio::write_f64s(&dir.join(DESIGNS_FILE), &self.x)?;
        binio::write_f64s(&dir.join(SCORES_FILE), &self.y)?;
        fs::write(dir.join(SIDECAR_FILE), serde_json::to_string_pretty(&self.meta)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let sidecar = dir.join(SIDECAR_FILE);
        let meta: DatasetMeta = serde_json::from_str(
            &fs::read_to_string(&sidecar)
                .map_err(|e| RgdError::Config(format!("cannot read dataset sidecar {}: {e}", sidecar.display())))?,
        )?;
        let x = binio::read_f64s(&dir.join(DESIGNS_FILE))?;
        let y = binio::read_f64s(&dir.join(SCORES_FILE))?;
        if y.len() != meta.rows || x.len() != meta.rows * meta.dim {
            return Err(RgdError::Checkpoint {
                path: dir.to_path_buf(),
                detail: format!(
                    "arrays hold {} designs / {} scores, sidecar says {} rows of width {}",
                    x.len(),
                    y.len(),
                    meta.rows,
                    meta.dim
                ),
            });
        }
        Ok(OfflineDataset { meta, x, y })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncapped_keeps_pool_prefix() {
        let t = Task::rosenbrock(3);
        let ds = generate_dataset(&t, 10, 1.0, 50, 4).unwrap();
        let big = generate_dataset(&t, 50, 1.0, 50, 4).unwrap();
        assert_eq!(ds.len(), 10);
        assert_eq!(ds.x[..], big.x[..30]);
        assert_eq!(ds.meta.y_min_ref, big.y.iter().copied().fold(f64::INFINITY, f64::min));
    }

    #[test]
    fn cap_is_respected_and_regeneration_is_identical() {
        let t = Task::rosenbrock(4);
        let a = generate_dataset(&t, 200, 0.9, 2000, 1).unwrap();
        let b = generate_dataset(&t, 200, 0.9, 2000, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.normalized_max().unwrap() <= 0.9 + 1e-12);
        let c = generate_dataset(&t, 200, 0.9, 2000, 2).unwrap();
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn small_pool_is_reported() {
        let t = Task::rosenbrock(4);
        match generate_dataset(&t, 90, 0.05, 100, 1) {
            Err(RgdError::InsufficientPool { wanted: 90, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn model_space_round_trip_and_stats() {
        let t = Task::rosenbrock(3);
        let ds = generate_dataset(&t, 500, 1.0, 500, 7).unwrap();
        let (zx, zy) = ds.model_space();
        let (my, sy) = mean_std(&zy);
        assert!(my.abs() < 1e-12 && (sy - 1.0).abs() < 1e-12);
        let back = ds.x_from_model(&zx[3..6]);
        for (a, b) in back.iter().zip(&ds.x[3..6]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((ds.y_from_model(zy[9]) - ds.y[9]).abs() < 1e-9);
    }

    #[test]
    fn top_k_orders_by_score() {
        let t = Task::rosenbrock(2);
        let ds = generate_dataset(&t, 100, 1.0, 100, 3).unwrap();
        let top = ds.top_k(5);
        assert_eq!(ds.y[top[0]], ds.y_max());
        assert!(top.windows(2).all(|w| ds.y[w[0]] >= ds.y[w[1]]));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_dataset(&Task::rosenbrock(3), 20, 1.0, 20, 5).unwrap();
        ds.save(dir.path()).unwrap();
        assert_eq!(OfflineDataset::load(dir.path()).unwrap(), ds);
        std::fs::write(dir.path().join(SCORES_FILE), [0u8; 16]).unwrap();
        assert!(OfflineDataset::load(dir.path()).is_err());
    }
}
