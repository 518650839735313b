use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::dynamics::{cornering_coeff_to_stiffness, VehicleParams};
use crate::scalar::Scalar;

/// Linear lateral error dynamics `x' = A x + B1 delta + B2 psi_dot_des` with
/// `x = (e1, e1_dot, e2, e2_dot)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LateralModel<T> {
    pub a: [[T; 4]; 4],
    pub b1: [T; 4],
    pub b2: [T; 4],
    /// Longitudinal speed the model is linearised at, m/s.
    pub v_x: f64,
}

/// Physical inputs of the error-dynamics model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LateralParams<T> {
    /// Front cornering stiffness, N/rad.
    pub c_af: T,
    /// Rear cornering stiffness, N/rad.
    pub c_ar: T,
    pub m: T,
    pub i_z: T,
    pub l_f: T,
    pub l_r: T,
}

impl<T: Scalar> LateralParams<T> {
    /// Derive cornering stiffness from the plant's stiffness coefficients.
    pub fn from_vehicle(p: &VehicleParams<T>) -> Self {
        let c = cornering_coeff_to_stiffness(p);
        Self {
            c_af: c.c_af,
            c_ar: c.c_ar,
            m: p.m,
            i_z: p.i_z,
            l_f: p.l_f,
            l_r: p.l_r,
        }
    }

    pub fn values(&self) -> LateralParams<f64> {
        LateralParams {
            c_af: self.c_af.re(),
            c_ar: self.c_ar.re(),
            m: self.m.re(),
            i_z: self.i_z.re(),
            l_f: self.l_f.re(),
            l_r: self.l_r.re(),
        }
    }
}

pub fn build_lateral_model<T: Scalar>(
    p: &LateralParams<T>,
    v_x: f64,
) -> Result<LateralModel<T>, ControlError> {
    if !(v_x > 0.0) {
        return Err(ControlError::InvalidSpeed(v_x));
    }
    for (name, x) in [
        ("c_af", p.c_af),
        ("c_ar", p.c_ar),
        ("m", p.m),
        ("i_z", p.i_z),
        ("l_f", p.l_f),
        ("l_r", p.l_r),
    ] {
        if !(x.re() > 0.0) {
            return Err(ControlError::InvalidParam(name));
        }
    }
    let z = T::zero();
    let one = T::one();
    let two = T::cst(2.0);
    let vx = T::cst(v_x);

    let sum = two * p.c_af + two * p.c_ar;
    let moment = two * p.c_af * p.l_f - two * p.c_ar * p.l_r;
    let inertia = two * p.c_af * p.l_f * p.l_f + two * p.c_ar * p.l_r * p.l_r;

    let a = [
        [z, one, z, z],
        [z, -sum / (p.m * vx), sum / p.m, -moment / (p.m * vx)],
        [z, z, z, one],
        [z, -moment / (p.i_z * vx), moment / p.i_z, -inertia / (p.i_z * vx)],
    ];
    let b1 = [z, two * p.c_af / p.m, z, two * p.c_af * p.l_f / p.i_z];
    let b2 = [z, -vx - moment / (p.m * vx), z, -inertia / (p.i_z * vx)];
    Ok(LateralModel { a, b1, b2, v_x })
}
