//! Single-track vehicle plant: parameters, vector fields, fixed-step
//! integration and rollouts.

mod model;
mod params;

pub use model::{
    dynamic_derivative, kinematic_derivative, kinematic_slip, kinematic_yaw_rate, Overrides,
    PlantInput, PlantState,
};
pub use params::{cornering_coeff_to_stiffness, CorneringStiffness, VehicleParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{clip, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid vehicle parameter `{0}`")]
    InvalidParams(&'static str),
    #[error("invalid rollout config: {0}")]
    InvalidConfig(&'static str),
    #[error("state became non-finite")]
    NonFiniteState,
    #[error("rollout diverged at step {step}")]
    Diverged { step: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutConfig {
    /// Step size, s.
    pub dt: f64,
    /// Number of integration steps.
    pub steps: usize,
    pub integrator: Integrator,
    /// Below this speed (m/s) the kinematic model is used.
    pub v_switch: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            dt: 0.002,
            steps: 1500,
            integrator: Integrator::Rk4,
            v_switch: 0.1,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0) {
            return Err(DynamicsError::InvalidConfig("dt must be positive"));
        }
        if self.steps < 1 {
            return Err(DynamicsError::InvalidConfig("steps must be at least 1"));
        }
        if !(self.v_switch >= 0.0) {
            return Err(DynamicsError::InvalidConfig("v_switch must be non-negative"));
        }
        Ok(())
    }
}

fn add_scaled<T: Scalar>(x: &[T; 7], k: &[T; 7], h: T) -> [T; 7] {
    std::array::from_fn(|i| x[i] + k[i] * h)
}

/// Advance one step of `cfg.dt`.
///
/// Overrides are applied first (steering clipped to the limit, speed set).
/// The kinematic field is used for the whole step when `|v| < v_switch`, in
/// which case slip and yaw rate are first snapped to their kinematic values.
pub fn step<T: Scalar>(
    state: &PlantState<T>,
    input: &PlantInput<T>,
    params: &VehicleParams<T>,
    cfg: &RolloutConfig,
) -> Result<PlantState<T>, DynamicsError> {
    let dmax = params.delta_max;
    let mut s = *state;
    if let Some(o) = input.overrides {
        s.delta = clip(o.delta_cmd, -dmax, dmax);
        s.v = o.v_cmd;
    }
    let kinematic = s.v.re().abs() < cfg.v_switch;
    if kinematic {
        s.beta = kinematic_slip(s.delta, params);
        s.psi_dot = kinematic_yaw_rate(s.v, s.delta, params);
    }
    let field = |x: &[T; 7]| {
        let st = PlantState::from_array(*x);
        if kinematic {
            kinematic_derivative(&st, input, params)
        } else {
            dynamic_derivative(&st, input, params)
        }
    };

    let x = s.to_array();
    let h = T::cst(cfg.dt);
    let next = match cfg.integrator {
        Integrator::Euler => add_scaled(&x, &field(&x), h),
        Integrator::Rk4 => {
            let half = T::cst(0.5 * cfg.dt);
            let k1 = field(&x);
            let k2 = field(&add_scaled(&x, &k1, half));
            let k3 = field(&add_scaled(&x, &k2, half));
            let k4 = field(&add_scaled(&x, &k3, h));
            let sixth = T::cst(cfg.dt / 6.0);
            let two = T::cst(2.0);
            std::array::from_fn(|i| x[i] + (k1[i] + two * k2[i] + two * k3[i] + k4[i]) * sixth)
        }
    };
    let mut out = PlantState::from_array(next);
    out.delta = clip(out.delta, -dmax, dmax);
    if !out.is_finite() {
        return Err(DynamicsError::NonFiniteState);
    }
    Ok(out)
}

/// Integrate `cfg.steps` steps from `initial`, asking `controller` for the
/// input at every step. Returns all `steps + 1` states.
pub fn rollout<T, C>(
    initial: PlantState<T>,
    mut controller: C,
    params: &VehicleParams<T>,
    cfg: &RolloutConfig,
) -> Result<Vec<PlantState<T>>, DynamicsError>
where
    T: Scalar,
    C: FnMut(usize, &PlantState<T>) -> PlantInput<T>,
{
    cfg.validate()?;
    if !initial.is_finite() {
        return Err(DynamicsError::Diverged { step: 0 });
    }
    let mut states = Vec::with_capacity(cfg.steps + 1);
    states.push(initial);
    let mut s = initial;
    for t in 0..cfg.steps {
        let input = controller(t, &s);
        s = step(&s, &input, params, cfg).map_err(|e| match e {
            DynamicsError::NonFiniteState => DynamicsError::Diverged { step: t },
            other => other,
        })?;
        states.push(s);
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arc(
        delta: f64,
        steps: usize,
        dt: f64,
        integrator: Integrator,
        start: PlantState<f64>,
    ) -> Vec<PlantState<f64>> {
        let cfg = RolloutConfig {
            dt,
            steps,
            integrator,
            v_switch: 0.1,
        };
        rollout(
            start,
            |_, _| PlantInput::direct(delta, 1.0),
            &VehicleParams::f1tenth(),
            &cfg,
        )
        .unwrap()
    }

    #[test]
    fn one_straight_rk4_step() {
        let s0 = PlantState::<f64>::at_rest(0.0, 0.0, 0.0);
        let cfg = RolloutConfig {
            steps: 1,
            ..Default::default()
        };
        let s1 = step(&s0, &PlantInput::direct(0.0, 1.0), &VehicleParams::f1tenth(), &cfg).unwrap();
        assert!((s1.s_x - 0.002).abs() < 1e-15);
        assert_eq!([s1.s_y, s1.delta, s1.psi, s1.psi_dot, s1.beta], [0.0; 5]);
        assert_eq!(s1.v, 1.0);
    }

    #[test]
    fn steering_is_clipped() {
        let s0 = PlantState::<f64>::moving(0.0, 0.0, 0.0, 1.0);
        let s1 = step(
            &s0,
            &PlantInput::direct(0.5, 1.0),
            &VehicleParams::f1tenth(),
            &RolloutConfig::default(),
        )
        .unwrap();
        assert_eq!(s1.delta, 0.34);
    }

    #[test]
    fn straight_rollout_length_and_distance() {
        let traj = arc(0.0, 500, 0.002, Integrator::Rk4, PlantState::at_rest(0.0, 0.0, 0.0));
        assert_eq!(traj.len(), 501);
        let last = traj.last().unwrap();
        assert!((last.s_x - 1.0).abs() < 1e-9);
        assert!(last.s_y.abs() < 1e-9);
    }

    #[test]
    fn max_steer_radius_near_kinematic_prediction() {
        let traj = arc(0.34, 5000, 0.002, Integrator::Rk4, PlantState::moving(0.0, 0.0, 0.0, 1.0));
        // Steady-state path radius from yaw rate: R = v / psi_dot.
        let last = traj.last().unwrap();
        let r = last.v / last.psi_dot;
        let kinematic = 0.330 / 0.34f64.tan();
        assert!((r - kinematic).abs() < 0.1 * kinematic, "radius {r} vs {kinematic}");
    }

    #[test]
    fn mirrored_steering_mirrors_path() {
        let start = PlantState::moving(0.0, 0.0, 0.0, 1.0);
        let left = arc(0.3, 1000, 0.002, Integrator::Rk4, start);
        let right = arc(-0.3, 1000, 0.002, Integrator::Rk4, start);
        for (a, b) in left.iter().zip(&right) {
            assert!((a.s_x - b.s_x).abs() < 1e-9);
            assert!((a.s_y + b.s_y).abs() < 1e-9);
            assert!((a.psi + b.psi).abs() < 1e-9);
            assert!((a.beta + b.beta).abs() < 1e-9);
        }
    }

    #[test]
    fn euler_and_rk4_agree_on_arc() {
        let start = PlantState::moving(0.0, 0.0, 0.0, 1.0);
        let e = arc(0.1, 1000, 0.002, Integrator::Euler, start);
        let r = arc(0.1, 1000, 0.002, Integrator::Rk4, start);
        let (a, b) = (e.last().unwrap(), r.last().unwrap());
        let d = ((a.s_x - b.s_x).powi(2) + (a.s_y - b.s_y).powi(2)).sqrt();
        assert!(d < 1e-3, "position gap {d}");
    }

    #[test]
    fn divergence_reports_step() {
        let cfg = RolloutConfig {
            steps: 10,
            ..Default::default()
        };
        let err = rollout(
            PlantState::moving(0.0, 0.0, 0.0, 1.0),
            |t, _| {
                if t == 3 {
                    PlantInput::direct(0.0, f64::NAN)
                } else {
                    PlantInput::direct(0.0, 1.0)
                }
            },
            &VehicleParams::f1tenth(),
            &cfg,
        )
        .unwrap_err();
        assert_eq!(err, DynamicsError::Diverged { step: 3 });
    }

    #[test]
    fn low_speed_uses_kinematic_model() {
        let p = VehicleParams::f1tenth();
        let s0 = PlantState::<f64>::moving(0.0, 0.0, 0.0, 0.05);
        let s1 = step(&s0, &PlantInput::direct(0.34, 0.05), &p, &RolloutConfig::default()).unwrap();
        let beta = kinematic_slip(0.34, &p);
        assert!((s1.beta - beta).abs() < 1e-15);
        assert!((s1.psi_dot - kinematic_yaw_rate(0.05, 0.34, &p)).abs() < 1e-15);
    }
}
