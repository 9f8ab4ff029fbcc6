//! Hybrid GPP estimation toolkit: a simplified soil–canopy simulator,
//! synthetic corpus generation, PAWN sensitivity analysis, neural-network and
//! random-forest regressors, vegetation-index baselines and daily inference.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod forward_sim;
pub mod gsa;
pub mod ml;
pub mod numfmt;
pub mod pipeline;
pub mod sampling;
pub mod spectral;

pub use error::{Error, Result};
