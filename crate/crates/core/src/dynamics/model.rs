//! Continuous-time vector fields of the single-track plant.

use serde::{Deserialize, Serialize};

use super::params::VehicleParams;
use crate::scalar::Scalar;

/// Seven-component plant state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState<T> {
    pub s_x: T,
    pub s_y: T,
    /// Steering angle, rad.
    pub delta: T,
    /// Longitudinal velocity, m/s.
    pub v: T,
    /// Yaw, rad.
    pub psi: T,
    /// Yaw rate, rad/s.
    pub psi_dot: T,
    /// Slip angle at the CG, rad.
    pub beta: T,
}

impl<T: Scalar> PlantState<T> {
    pub fn at_rest(s_x: f64, s_y: f64, psi: f64) -> Self {
        Self::moving(s_x, s_y, psi, 0.0)
    }

    pub fn moving(s_x: f64, s_y: f64, psi: f64, v: f64) -> Self {
        Self {
            s_x: T::cst(s_x),
            s_y: T::cst(s_y),
            delta: T::zero(),
            v: T::cst(v),
            psi: T::cst(psi),
            psi_dot: T::zero(),
            beta: T::zero(),
        }
    }

    pub fn to_array(&self) -> [T; 7] {
        [
            self.s_x,
            self.s_y,
            self.delta,
            self.v,
            self.psi,
            self.psi_dot,
            self.beta,
        ]
    }

    pub fn from_array(a: [T; 7]) -> Self {
        Self {
            s_x: a[0],
            s_y: a[1],
            delta: a[2],
            v: a[3],
            psi: a[4],
            psi_dot: a[5],
            beta: a[6],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.all_finite())
    }

    pub fn values(&self) -> PlantState<f64> {
        PlantState::from_array(self.to_array().map(|x| x.re()))
    }
}

impl PlantState<f64> {
    pub fn lift<U: Scalar>(&self) -> PlantState<U> {
        PlantState::from_array(self.to_array().map(U::cst))
    }
}

/// Direct state commands replacing the rate inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overrides<T> {
    pub delta_cmd: T,
    pub v_cmd: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantInput<T> {
    /// Steering velocity, rad/s.
    pub u1: T,
    /// Longitudinal acceleration, m/s^2.
    pub u2: T,
    pub overrides: Option<Overrides<T>>,
}

impl<T: Scalar> PlantInput<T> {
    pub fn rates(u1: T, u2: T) -> Self {
        Self {
            u1,
            u2,
            overrides: None,
        }
    }

    /// Set steering and speed directly; rate inputs are zero.
    pub fn direct(delta_cmd: T, v_cmd: T) -> Self {
        Self {
            u1: T::zero(),
            u2: T::zero(),
            overrides: Some(Overrides { delta_cmd, v_cmd }),
        }
    }
}

/// Nonlinear single-track dynamics with load transfer.
///
/// Requires `state.v != 0`; low speeds are routed to
/// [`kinematic_derivative`] by the integrator.
pub fn dynamic_derivative<T: Scalar>(
    state: &PlantState<T>,
    input: &PlantInput<T>,
    p: &VehicleParams<T>,
) -> [T; 7] {
    let PlantState {
        delta,
        v,
        psi,
        psi_dot,
        beta,
        ..
    } = *state;
    let (u1, u2) = (input.u1, input.u2);
    let g = T::cst(p.g);
    let l = p.wheelbase();

    // Normal-load factors of the front and rear axle.
    let load_f = g * p.l_r - u2 * p.h_cg;
    let load_r = g * p.l_f + u2 * p.h_cg;
    let front = p.c_sf * load_f;
    let rear = p.c_sr * load_r;
    let yaw_over_v = psi_dot / v;

    let psi_ddot = p.mu * p.m / (p.i_z * l)
        * (p.l_f * front * delta + (p.l_r * rear - p.l_f * front) * beta
            - (p.l_f * p.l_f * front + p.l_r * p.l_r * rear) * yaw_over_v);
    let beta_dot = p.mu / (v * l)
        * (front * delta - (rear + front) * beta + (rear * p.l_r - front * p.l_f) * yaw_over_v)
        - psi_dot;

    let heading = psi + beta;
    [
        v * heading.cos(),
        v * heading.sin(),
        u1,
        u2,
        psi_dot,
        psi_ddot,
        beta_dot,
    ]
}

/// Slip angle implied by the kinematic model at steering `delta`.
pub fn kinematic_slip<T: Scalar>(delta: T, p: &VehicleParams<T>) -> T {
    (p.l_r * delta.tan() / p.wheelbase()).atan()
}

/// Yaw rate implied by the kinematic model.
pub fn kinematic_yaw_rate<T: Scalar>(v: T, delta: T, p: &VehicleParams<T>) -> T {
    let beta = kinematic_slip(delta, p);
    v * beta.cos() * delta.tan() / p.wheelbase()
}

/// Kinematic single-track model used at low speed.
///
/// Slip and yaw rate are algebraic functions of steering and speed; the last
/// two components are their time derivatives.
pub fn kinematic_derivative<T: Scalar>(
    state: &PlantState<T>,
    input: &PlantInput<T>,
    p: &VehicleParams<T>,
) -> [T; 7] {
    let PlantState { delta, v, psi, .. } = *state;
    let (u1, u2) = (input.u1, input.u2);
    let l = p.wheelbase();
    let beta = kinematic_slip(delta, p);
    let yaw_rate = kinematic_yaw_rate(v, delta, p);

    let tan_d = delta.tan();
    let cos_d = delta.cos();
    let ratio = p.l_r * tan_d / l;
    let beta_dot = p.l_r / l * u1 / (cos_d * cos_d) / (T::one() + ratio * ratio);
    let psi_ddot = (u2 * beta.cos() * tan_d - v * beta.sin() * beta_dot * tan_d
        + v * beta.cos() * u1 / (cos_d * cos_d))
        / l;

    let heading = psi + beta;
    [
        v * heading.cos(),
        v * heading.sin(),
        u1,
        u2,
        yaw_rate,
        psi_ddot,
        beta_dot,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn straight_line_equilibrium() {
        let s = PlantState::<f64>::moving(0.0, 0.0, 0.0, 1.0);
        let d = dynamic_derivative(&s, &PlantInput::rates(0.0, 0.0), &VehicleParams::f1tenth());
        assert_eq!(d, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn heading_rotates_velocity() {
        let s = PlantState::<f64>::moving(0.0, 0.0, FRAC_PI_2, 1.0);
        let d = dynamic_derivative(&s, &PlantInput::rates(0.0, 0.0), &VehicleParams::f1tenth());
        assert!(d[0].abs() < 1e-15);
        assert!((d[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn f1tenth_yaw_and_slip_rates() {
        // Hand evaluation with psi_dot = beta = 0, u2 = 0:
        //   psi_ddot = mu m / (I_z L) * l_f C_Sf g l_r delta
        //   beta_dot = mu / (v L) * C_Sf g l_r delta
        let p = VehicleParams::f1tenth();
        let mut s = PlantState::<f64>::moving(0.0, 0.0, 0.0, 1.0);
        s.delta = 0.3;
        let d = dynamic_derivative(&s, &PlantInput::rates(0.0, 0.0), &p);
        let expected_psi_ddot = 1.0489 * 3.1 / (0.04712 * 0.330) * 0.159 * 4.728 * 9.81 * 0.171 * 0.3;
        let expected_beta_dot = 1.0489 / 0.330 * 4.728 * 9.81 * 0.171 * 0.3;
        assert!((d[5] - expected_psi_ddot).abs() < 1e-9 * expected_psi_ddot);
        assert!((d[6] - expected_beta_dot).abs() < 1e-9 * expected_beta_dot);
        // Frozen values of the same formulas.
        assert!((d[5] - 79.111118).abs() < 1e-5);
        assert!((d[6] - 7.562824).abs() < 1e-5);
    }

    #[test]
    fn kinematic_rest_state() {
        let s = PlantState::<f64>::at_rest(0.0, 0.0, 0.0);
        let d = kinematic_derivative(&s, &PlantInput::rates(0.0, 0.0), &VehicleParams::f1tenth());
        assert_eq!(d, [0.0; 7]);
    }

    #[test]
    fn kinematic_straight() {
        let s = PlantState::<f64>::moving(0.0, 0.0, 0.0, 0.05);
        let d = kinematic_derivative(&s, &PlantInput::rates(0.0, 0.0), &VehicleParams::f1tenth());
        assert_eq!(d[0], 0.05);
        assert_eq!(d[1], 0.0);
        assert_eq!(d[4], 0.0);
    }

    #[test]
    fn kinematic_turning_yaw_rate() {
        let p = VehicleParams::f1tenth();
        let mut s = PlantState::<f64>::moving(0.0, 0.0, 0.0, 0.05);
        s.delta = 0.34;
        let d = kinematic_derivative(&s, &PlantInput::rates(0.0, 0.0), &p);
        let beta = (0.171 * 0.34f64.tan() / 0.330).atan();
        let expected = 0.05 * beta.cos() * 0.34f64.tan() / 0.330;
        assert!((d[4] - expected).abs() < 1e-15);
        assert!((d[0] - 0.05 * beta.cos()).abs() < 1e-15);
        assert!((d[1] - 0.05 * beta.sin()).abs() < 1e-15);
    }
}
