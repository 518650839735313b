//! Lateral error dynamics, pole placement and circular-lane tracking.

mod lateral;
mod place;
mod tracking;

pub use lateral::{build_lateral_model, LateralModel, LateralParams};
pub use place::{
    closed_loop_eigs, closed_loop_eigs_n, multiset_distance, place_poles, place_poles_n,
    GainVector, PoleSet, MAX_CONDITION,
};
pub use tracking::{
    compute_errors, control_law, simulate_lane_keeping, Direction, ErrorFilter, ErrorState,
    LaneKeepingSetup, LaneKeepingTrace, ReferenceCircle,
};

use num_complex::Complex64;
use thiserror::Error;

use crate::dynamics::DynamicsError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("longitudinal speed must be positive, got {0}")]
    InvalidSpeed(f64),
    #[error("parameter `{0}` must be positive")]
    InvalidParam(&'static str),
    #[error("invalid pole set: {0}")]
    InvalidPoles(String),
    #[error("pole {0} is not in the open left half-plane")]
    UnstablePole(Complex64),
    #[error("pole {0} has no conjugate partner")]
    NotConjugateClosed(Complex64),
    #[error("system is numerically uncontrollable (condition number {cond:e})")]
    Uncontrollable { cond: f64 },
    #[error("pose is at the circle center; lateral error undefined")]
    AtCircleCenter,
    #[error("circle radius must be positive and finite, got {0}")]
    InvalidCircle(f64),
    #[error("step size must be positive, got {0}")]
    InvalidStep(f64),
    #[error("closed loop diverged at step {step}")]
    Diverged { step: usize },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}
