use serde::{Deserialize, Serialize};

use super::DynamicsError;
use crate::scalar::Scalar;

/// Physical parameters of the single-track vehicle.
///
/// Fields that may be identified are generic so they can carry derivatives;
/// the steering limit and gravity are always plain constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams<T> {
    /// Mass, kg.
    pub m: T,
    /// CG to front axle, m.
    pub l_f: T,
    /// CG to rear axle, m.
    pub l_r: T,
    /// Yaw inertia, kg m^2.
    pub i_z: T,
    /// CG height, m.
    pub h_cg: T,
    /// Friction coefficient.
    pub mu: T,
    /// Front cornering stiffness coefficient, 1/rad.
    pub c_sf: T,
    /// Rear cornering stiffness coefficient, 1/rad.
    pub c_sr: T,
    /// Wheel radius, m.
    pub r_w: T,
    /// Steering limit, rad.
    pub delta_max: f64,
    /// Gravitational acceleration, m/s^2.
    #[serde(default = "default_g")]
    pub g: f64,
}

fn default_g() -> f64 {
    9.81
}

impl VehicleParams<f64> {
    /// F1TENTH reference vehicle.
    pub fn f1tenth() -> Self {
        Self {
            m: 3.1,
            l_f: 0.159,
            l_r: 0.171,
            i_z: 0.04712,
            h_cg: 0.074,
            mu: 1.0489,
            c_sf: 4.728,
            c_sr: 5.546,
            r_w: 0.059,
            delta_max: 0.34,
            g: 9.81,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let checks = [
            ("m", self.m > 0.0),
            ("i_z", self.i_z > 0.0),
            ("l_f", self.l_f > 0.0),
            ("l_r", self.l_r > 0.0),
            ("h_cg", self.h_cg >= 0.0),
            ("mu", self.mu > 0.0),
            ("c_sf", self.c_sf > 0.0),
            ("c_sr", self.c_sr > 0.0),
            ("r_w", self.r_w > 0.0),
            ("delta_max", self.delta_max > 0.0),
            ("g", self.g > 0.0),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(DynamicsError::InvalidParams(name));
            }
        }
        Ok(())
    }

    /// Lift every field into another scalar type as a constant.
    pub fn lift<U: Scalar>(&self) -> VehicleParams<U> {
        VehicleParams {
            m: U::cst(self.m),
            l_f: U::cst(self.l_f),
            l_r: U::cst(self.l_r),
            i_z: U::cst(self.i_z),
            h_cg: U::cst(self.h_cg),
            mu: U::cst(self.mu),
            c_sf: U::cst(self.c_sf),
            c_sr: U::cst(self.c_sr),
            r_w: U::cst(self.r_w),
            delta_max: self.delta_max,
            g: self.g,
        }
    }
}

impl Default for VehicleParams<f64> {
    fn default() -> Self {
        Self::f1tenth()
    }
}

impl<T: Scalar> VehicleParams<T> {
    pub fn wheelbase(&self) -> T {
        self.l_f + self.l_r
    }

    /// Primal values only.
    pub fn values(&self) -> VehicleParams<f64> {
        VehicleParams {
            m: self.m.re(),
            l_f: self.l_f.re(),
            l_r: self.l_r.re(),
            i_z: self.i_z.re(),
            h_cg: self.h_cg.re(),
            mu: self.mu.re(),
            c_sf: self.c_sf.re(),
            c_sr: self.c_sr.re(),
            r_w: self.r_w.re(),
            delta_max: self.delta_max,
            g: self.g,
        }
    }
}

/// Tire cornering stiffness in N/rad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorneringStiffness<T> {
    pub c_af: T,
    pub c_ar: T,
}

/// Convert stiffness coefficients to cornering stiffness using static axle
/// loads: `C_a,i = mu * C_S,i * F_z,i`.
pub fn cornering_coeff_to_stiffness<T: Scalar>(p: &VehicleParams<T>) -> CorneringStiffness<T> {
    let weight = p.m * T::cst(p.g);
    let l = p.wheelbase();
    let fz_f = weight * p.l_r / l;
    let fz_r = weight * p.l_f / l;
    CorneringStiffness {
        c_af: p.mu * p.c_sf * fz_f,
        c_ar: p.mu * p.c_sr * fz_r,
    }
}
