//! Minimal dense-network substrate.

pub mod adam;
pub mod checkpoint;
pub mod dual;
pub mod mlp;

pub use adam::{AdamConfig, AdamOutcome, AdamState};
pub use dual::Dual;
pub use mlp::{Activation, BatchCache, ForwardCache, Mlp};
