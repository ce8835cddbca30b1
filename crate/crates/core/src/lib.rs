//! Robust guided diffusion for offline black-box optimization.
//!
//! A conditional/unconditional score network generates designs; a Gaussian
//! proxy tunes the guidance strength at every reverse step, and the proxy is
//! itself refined toward the diffusion model's own posterior over scores on
//! adversarial designs.

pub mod benchmark;
pub mod binio;
pub mod data;
pub mod diffusion;
pub mod error;
pub mod likelihood;
pub mod nn;
pub mod parallel;
pub mod pipeline;
pub mod proxy;
pub mod refinement;
pub mod rng;
pub mod sampler;

pub use error::{Result, RgdError};
