//! Differentiable single-track vehicle simulation with parameter
//! identification and lane-keeping control.
//!
//! Every numeric routine is generic over [`Scalar`], implemented for `f32`,
//! `f64` and the forward-mode [`Dual`](grad::Dual) types. Running a rollout on
//! duals seeded with the decision parameters yields exact gradients of any
//! loss built on top of it.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod control;
pub mod dynamics;
pub mod grad;
pub mod losses;
pub mod optim;
pub mod scalar;
pub mod sysid;

pub use scalar::Scalar;

/// Dual number over `f64`.
pub type Dual64 = grad::Dual<f64>;
/// Dual number over `f32`.
pub type Dual32 = grad::Dual<f32>;
/// Vehicle parameters in `f64`.
pub type VehicleParams64 = dynamics::VehicleParams<f64>;
/// Plant state in `f64`.
pub type PlantState64 = dynamics::PlantState<f64>;
/// Planar trajectory in `f64`.
pub type Trajectory64 = losses::Trajectory<f64>;
/// Feedback gains in `f64`.
pub type GainVector64 = control::GainVector<f64>;
/// Lateral error state in `f64`.
pub type ErrorState64 = control::ErrorState<f64>;
