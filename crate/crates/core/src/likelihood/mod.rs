//! Exact design log-densities, the score prior, and the diffusion posterior
//! over scores.

pub mod flow;
pub mod kde;
pub mod posterior;

pub use flow::{log_density, standard_normal_logpdf, Divergence, FlowOdeConfig};
pub use kde::KdeModel;
pub use posterior::{combine, posterior_logpdf, PosteriorCache, PosteriorRecord};
