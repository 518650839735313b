//! Adam with gradient clipping, CMA-ES, and validation-based early stopping.

mod adam;
mod cmaes;
mod early;

pub use adam::{clip_to_norm, AdamConfig, AdamState};
pub use cmaes::{Bounds, CmaesConfig, CmaesState};
pub use early::{EarlyStop, EarlyStopState};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite gradient for `{name}`: {value}")]
    NonFiniteGradient { name: String, value: f64 },
    #[error("invalid optimizer setting: {0}")]
    InvalidConfig(&'static str),
}
