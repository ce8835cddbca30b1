use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, RgdError>;

#[derive(Debug, Error)]
pub enum RgdError {
    /// Invalid configuration or input data supplied by the caller.
    #[error("configuration error: {0}")]
    Config(String),

    /// A value became NaN or infinite during a computation.
    #[error("numerical failure in {context}: {detail}")]
    NonFinite { context: String, detail: String },

    /// The offline pool did not contain enough qualifying designs.
    #[error("only {found} of {wanted} pool designs qualify under cap {cap}; increase the pool size")]
    InsufficientPool { found: usize, wanted: usize, cap: f64 },

    #[error("every chain in the batch failed; first failure: {0}")]
    AllChainsFailed(String),

    #[error("checkpoint error at {path}: {detail}")]
    Checkpoint { path: PathBuf, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl RgdError {
    pub fn non_finite(context: impl Into<String>, detail: impl Into<String>) -> Self {
        RgdError::NonFinite {
            context: context.into(),
            detail: detail.into(),
        }
    }

    /// True for failures caused by the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, RgdError::NonFinite { .. } | RgdError::AllChainsFailed(_))
    }
}
