//! Error extraction against circular lanes and the closed-loop lane keeper.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::place::GainVector;
use super::ControlError;
use crate::dynamics::{step, PlantInput, PlantState, RolloutConfig, VehicleParams};
use crate::scalar::{clip, wrap_angle, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Ccw,
    Cw,
}

impl Direction {
    /// +1 for counter-clockwise travel.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Ccw => 1.0,
            Direction::Cw => -1.0,
        }
    }
}

/// A circular lane centerline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceCircle {
    pub center: [f64; 2],
    pub radius: f64,
    pub direction: Direction,
}

impl ReferenceCircle {
    pub fn new(center: [f64; 2], radius: f64, direction: Direction) -> Result<Self, ControlError> {
        let c = Self {
            center,
            radius,
            direction,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(ControlError::InvalidCircle(self.radius));
        }
        Ok(())
    }

    /// Circle through the origin's neighbourhood for a vehicle starting at
    /// the origin heading along +y: center `(h, 1)` with `h = +r` (clockwise)
    /// or `h = -r` (counter-clockwise).
    pub fn offset_from_origin(radius: f64, direction: Direction) -> Result<Self, ControlError> {
        let h = -direction.sign() * radius;
        Self::new([h, 1.0], radius, direction)
    }

    /// Desired yaw rate for travel at `v_x`.
    pub fn yaw_rate(&self, v_x: f64) -> f64 {
        self.direction.sign() * v_x / self.radius
    }

    /// Point and tangent heading after travelling `arc` metres from the
    /// projection of `(x, y)`.
    pub fn advance(&self, x: f64, y: f64, arc: f64) -> (f64, f64, f64) {
        let theta0 = (y - self.center[1]).atan2(x - self.center[0]);
        let theta = theta0 + self.direction.sign() * arc / self.radius;
        let px = self.center[0] + self.radius * theta.cos();
        let py = self.center[1] + self.radius * theta.sin();
        (px, py, theta + self.direction.sign() * FRAC_PI_2)
    }
}

/// Lateral error state `(e1, e1_dot, e2, e2_dot)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorState<T> {
    pub e1: T,
    pub e1_dot: T,
    pub e2: T,
    pub e2_dot: T,
}

impl<T: Scalar> ErrorState<T> {
    pub fn zero() -> Self {
        Self {
            e1: T::zero(),
            e1_dot: T::zero(),
            e2: T::zero(),
            e2_dot: T::zero(),
        }
    }

    pub fn as_array(&self) -> [T; 4] {
        [self.e1, self.e1_dot, self.e2, self.e2_dot]
    }

    pub fn values(&self) -> ErrorState<f64> {
        ErrorState {
            e1: self.e1.re(),
            e1_dot: self.e1_dot.re(),
            e2: self.e2.re(),
            e2_dot: self.e2_dot.re(),
        }
    }

    /// Errors of `pose` with zero derivative estimates.
    pub fn initial(pose: &PlantState<T>, circle: &ReferenceCircle) -> Result<Self, ControlError> {
        let (e1, e2) = position_errors(pose, circle)?;
        Ok(Self {
            e1,
            e1_dot: T::zero(),
            e2,
            e2_dot: T::zero(),
        })
    }
}

/// Exponential smoothing of the error derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErrorFilter {
    pub alpha: f64,
    /// Divide the per-step increment by `dt`, giving derivatives in physical
    /// units instead of per-step differences.
    pub scale_derivative_by_dt: bool,
}

impl Default for ErrorFilter {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            scale_derivative_by_dt: false,
        }
    }
}

/// Signed lateral offset (positive to the left of the direction of travel)
/// and wrapped heading error.
fn position_errors<T: Scalar>(
    pose: &PlantState<T>,
    circle: &ReferenceCircle,
) -> Result<(T, T), ControlError> {
    let dx = pose.s_x - T::cst(circle.center[0]);
    let dy = pose.s_y - T::cst(circle.center[1]);
    let dist = (dx * dx + dy * dy).sqrt();
    if !(dist.re() > 1e-12 * circle.radius) {
        return Err(ControlError::AtCircleCenter);
    }
    let sign = circle.direction.sign();
    // Left of travel is inward for ccw, outward for cw.
    let e1 = T::cst(sign) * (T::cst(circle.radius) - dist);
    let psi_des = dy.atan2(dx) + T::cst(sign * FRAC_PI_2);
    let e2 = wrap_angle(pose.psi - psi_des);
    Ok((e1, e2))
}

/// Tracking errors of `pose` against `circle`, with derivative estimates
/// smoothed from the previous error state.
pub fn compute_errors<T: Scalar>(
    pose: &PlantState<T>,
    circle: &ReferenceCircle,
    prev: &ErrorState<T>,
    filter: &ErrorFilter,
    dt: f64,
) -> Result<ErrorState<T>, ControlError> {
    if !(dt > 0.0) {
        return Err(ControlError::InvalidStep(dt));
    }
    let (e1, e2) = position_errors(pose, circle)?;
    let mut d1 = e1 - prev.e1;
    let mut d2 = wrap_angle(e2 - prev.e2);
    if filter.scale_derivative_by_dt {
        let inv = T::cst(1.0 / dt);
        d1 *= inv;
        d2 *= inv;
    }
    let a = T::cst(filter.alpha);
    let keep = T::cst(1.0 - filter.alpha);
    Ok(ErrorState {
        e1,
        e1_dot: keep * prev.e1_dot + a * d1,
        e2,
        e2_dot: keep * prev.e2_dot + a * d2,
    })
}

/// `delta = clip(-K x, +-delta_max)`.
pub fn control_law<T: Scalar>(k: &GainVector<T>, x: &ErrorState<T>, delta_max: f64) -> T {
    let x = x.as_array();
    let u = (0..4).fold(T::zero(), |acc, i| acc + k.0[i] * x[i]);
    clip(-u, -delta_max, delta_max)
}

/// Closed-loop simulation output; index 0 is the initial state.
#[derive(Debug, Clone)]
pub struct LaneKeepingTrace<T> {
    pub states: Vec<PlantState<T>>,
    pub errors: Vec<ErrorState<T>>,
    pub steering: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneKeepingSetup {
    pub circle: ReferenceCircle,
    pub v_x: f64,
    pub filter: ErrorFilter,
}

/// Run the plant under `delta = -K x` with the speed held at `v_x`.
pub fn simulate_lane_keeping<T: Scalar>(
    gains: &GainVector<T>,
    plant: &VehicleParams<T>,
    initial: PlantState<T>,
    setup: &LaneKeepingSetup,
    cfg: &RolloutConfig,
) -> Result<LaneKeepingTrace<T>, ControlError> {
    cfg.validate()?;
    let v_cmd = T::cst(setup.v_x);
    let mut x = ErrorState::initial(&initial, &setup.circle)?;
    let mut s = initial;
    let mut trace = LaneKeepingTrace {
        states: Vec::with_capacity(cfg.steps + 1),
        errors: Vec::with_capacity(cfg.steps + 1),
        steering: Vec::with_capacity(cfg.steps),
    };
    trace.states.push(s);
    trace.errors.push(x);
    for t in 0..cfg.steps {
        let delta = control_law(gains, &x, plant.delta_max);
        s = step(&s, &PlantInput::direct(delta, v_cmd), plant, cfg)
            .map_err(|_| ControlError::Diverged { step: t })?;
        x = compute_errors(&s, &setup.circle, &x, &setup.filter, cfg.dt)?;
        if !x.as_array().iter().all(|e| e.all_finite()) {
            return Err(ControlError::Diverged { step: t });
        }
        trace.states.push(s);
        trace.errors.push(x);
        trace.steering.push(delta);
    }
    Ok(trace)
}
