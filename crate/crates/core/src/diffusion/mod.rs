//! VP-SDE schedule and the proxy-free (classifier-free) score model.

pub mod schedule;
pub mod score;
pub mod train;

pub use schedule::VpSchedule;
pub use score::{GaussianDataScore, ScoreModel, ScoreNet, ScoreNetMeta};
pub use train::{train_score, ScoreTrainSpec, ScoreTrainer};
