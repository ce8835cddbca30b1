//! Rosenbrock tasks, offline dataset generation and evaluation.

pub mod dataset;
pub mod eval;
pub mod task;

pub use dataset::{generate_dataset, DatasetMeta, OfflineDataset};
pub use eval::{evaluate, median, EvalReport, DEFAULT_BUDGET};
pub use task::{normalize, oracle_calls_on_this_thread, rosenbrock, Task};
