use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::SysidError;
use crate::control::{
    build_lateral_model, closed_loop_eigs, place_poles, simulate_lane_keeping, ControlError,
    ErrorFilter, ErrorState, GainVector, LaneKeepingSetup, LateralParams, PoleSet, ReferenceCircle,
};
use crate::dynamics::{PlantState, RolloutConfig, VehicleParams};
use crate::scalar::Scalar;

/// Place `poles` for the lateral model built from `params` at speed `v_x`.
pub fn derive_gains<T: Scalar>(
    params: &VehicleParams<T>,
    v_x: f64,
    poles: &PoleSet,
) -> Result<GainVector<T>, SysidError> {
    let model = build_lateral_model(&LateralParams::from_vehicle(params), v_x)?;
    Ok(place_poles(&model, poles)?)
}

/// Mean absolute errors over the final fifth of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub e1: f64,
    pub e2: f64,
}

impl SteadyState {
    pub fn from_errors(errors: &[ErrorState<f64>]) -> Self {
        let n = errors.len();
        let tail = &errors[n - (n / 5).max(1).min(n)..];
        let mean = |f: fn(&ErrorState<f64>) -> f64| tail.iter().map(|e| f(e).abs()).sum::<f64>() / tail.len() as f64;
        Self {
            e1: mean(|e| e.e1),
            e2: mean(|e| e.e2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub gains: GainVector<f64>,
    /// Closed-loop eigenvalues of the design model as `[re, im]`; empty when
    /// gains were given directly.
    pub eigenvalues: Vec<[f64; 2]>,
    pub circle: ReferenceCircle,
    pub v_x: f64,
    pub steady_state: SteadyState,
    pub dt: f64,
    /// Error state at every step, starting with the initial one.
    pub profile: Vec<ErrorState<f64>>,
    pub states: Vec<PlantState<f64>>,
}

/// Run the lane keeper with gains designed on `gain_params` against a plant
/// with `plant_params`, starting at rest at the origin heading along +y.
pub fn evaluate_controller(
    gain_params: &VehicleParams<f64>,
    plant_params: &VehicleParams<f64>,
    poles: &PoleSet,
    circle: &ReferenceCircle,
    cfg: &RolloutConfig,
    v_x: f64,
    filter: &ErrorFilter,
) -> Result<Evaluation, SysidError> {
    gain_params.validate()?;
    let model = build_lateral_model(&LateralParams::from_vehicle(gain_params), v_x)?;
    let gains = place_poles(&model, poles)?;
    let eigenvalues: Vec<[f64; 2]> = closed_loop_eigs(&model, &gains)
        .iter()
        .map(|c| [c.re, c.im])
        .collect();
    evaluate_gains(&gains, &eigenvalues, plant_params, circle, cfg, v_x, filter)
}

/// Run the lane keeper with given gains. `eigenvalues` (`[re, im]`) describe
/// the design model and are only reported.
pub fn evaluate_gains(
    gains: &GainVector<f64>,
    eigenvalues: &[[f64; 2]],
    plant_params: &VehicleParams<f64>,
    circle: &ReferenceCircle,
    cfg: &RolloutConfig,
    v_x: f64,
    filter: &ErrorFilter,
) -> Result<Evaluation, SysidError> {
    plant_params.validate()?;
    let eigenvalues = eigenvalues.to_vec();
    let setup = LaneKeepingSetup {
        circle: *circle,
        v_x,
        filter: *filter,
    };
    let initial = PlantState::at_rest(0.0, 0.0, FRAC_PI_2);
    let trace = match simulate_lane_keeping(gains, plant_params, initial, &setup, cfg) {
        Ok(t) => t,
        Err(ControlError::Diverged { step }) => {
            return Err(SysidError::EvaluationDiverged {
                gains: gains.0,
                eigenvalues,
                step,
            })
        }
        Err(e) => return Err(e.into()),
    };
    Ok(Evaluation {
        gains: *gains,
        eigenvalues,
        circle: *circle,
        v_x,
        steady_state: SteadyState::from_errors(&trace.errors),
        dt: cfg.dt,
        profile: trace.errors,
        states: trace.states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::multiset_distance;
    use crate::grad::{check_gradient, Objective};
    use crate::sysid::problem::default_poles;

    fn heavy_vehicle() -> VehicleParams<f64> {
        // m = 14.35 kg and c_af = c_ar = 15.37 N/rad, expressed through the
        // stiffness coefficients: c_s = c_a * L / (mu m g l_other).
        let mut p = VehicleParams::f1tenth();
        p.m = 14.35;
        p.i_z = 1.764;
        p.l_f = 0.4;
        p.l_r = 0.4;
        p.mu = 1.0;
        let c_s = 15.37 * 0.8 / (14.35 * 9.81 * 0.4);
        p.c_sf = c_s;
        p.c_sr = c_s;
        p
    }

    #[test]
    fn heavy_vehicle_gains_match_oracle() {
        // scipy.signal.place_poles on the same lateral model at 1 m/s.
        let k = derive_gains(&heavy_vehicle(), 1.0, &default_poles()).unwrap();
        let expected = [46.87926611, 10.98299748, 2.74593045, -1.05990329];
        for (a, b) in k.0.iter().zip(expected) {
            assert!((a - b).abs() < 1e-6 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn derived_gains_place_the_poles() {
        let p = VehicleParams::f1tenth();
        let poles = default_poles();
        let k = derive_gains(&p, 1.0, &poles).unwrap();
        let model = build_lateral_model(&LateralParams::from_vehicle(&p), 1.0).unwrap();
        let eigs = closed_loop_eigs(&model, &k);
        assert!(multiset_distance(&eigs, poles.poles()) < 1e-6);
    }

    struct GainSum;

    impl Objective for GainSum {
        fn eval<T: Scalar>(&self, params: &[T]) -> T {
            let mut p = VehicleParams::f1tenth().lift::<T>();
            p.m = params[0];
            p.c_sf = params[1];
            let k = derive_gains(&p, 1.0, &default_poles()).unwrap();
            k.0[0] + k.0[1] + k.0[2] + k.0[3]
        }
    }

    #[test]
    fn gains_differentiate_through_placement() {
        let r = check_gradient(&GainSum, &[3.1, 4.728], 1e-5).unwrap();
        assert!(r.max_rel_err < 1e-6, "{r:?}");
    }

    #[test]
    fn steady_state_uses_final_fifth() {
        let errors: Vec<ErrorState<f64>> = (0..10)
            .map(|i| ErrorState {
                e1: if i >= 8 { -2.0 } else { 100.0 },
                e1_dot: 0.0,
                e2: if i >= 8 { 0.5 } else { 100.0 },
                e2_dot: 0.0,
            })
            .collect();
        let s = SteadyState::from_errors(&errors);
        assert_eq!(s.e1, 2.0);
        assert_eq!(s.e2, 0.5);
    }
}
