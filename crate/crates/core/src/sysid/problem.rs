use std::fmt;

use serde::{Deserialize, Serialize};

use super::SysidError;
use crate::control::{GainVector, LateralParams, PoleSet};
use crate::dynamics::VehicleParams;
use crate::scalar::Scalar;

/// What is being fitted and how candidates are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemMode {
    /// Plant parameters, scored by replaying logged commands against
    /// reference trajectories.
    TrajectoryMatch,
    /// Controller-side model parameters, scored by closed-loop tracking.
    LaneKeeping,
    /// Feedback gains directly, scored by closed-loop tracking.
    GainDirect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionVar {
    M,
    LF,
    LR,
    CSf,
    CSr,
    CAf,
    CAr,
    K1,
    K2,
    K3,
    K4,
}

impl DecisionVar {
    pub fn name(self) -> &'static str {
        match self {
            DecisionVar::M => "m",
            DecisionVar::LF => "l_f",
            DecisionVar::LR => "l_r",
            DecisionVar::CSf => "c_sf",
            DecisionVar::CSr => "c_sr",
            DecisionVar::CAf => "c_af",
            DecisionVar::CAr => "c_ar",
            DecisionVar::K1 => "k1",
            DecisionVar::K2 => "k2",
            DecisionVar::K3 => "k3",
            DecisionVar::K4 => "k4",
        }
    }

    fn allowed_in(self, mode: ProblemMode) -> bool {
        use DecisionVar::*;
        match mode {
            ProblemMode::TrajectoryMatch => matches!(self, M | LF | LR | CSf | CSr),
            ProblemMode::LaneKeeping => matches!(self, M | LF | LR | CAf | CAr),
            ProblemMode::GainDirect => matches!(self, K1 | K2 | K3 | K4),
        }
    }
}

impl fmt::Display for DecisionVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One decision scalar. Several variables listed together are tied: they
/// all take this scalar's value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarGroup {
    pub vars: Vec<DecisionVar>,
    /// Uniform initialization range.
    pub init: [f64; 2],
    /// Projection box applied after every update.
    pub bounds: [f64; 2],
    /// Optimizers work on `value / scale`. Defaults to the width of the
    /// initialization range, or 1 when that is zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

impl VarGroup {
    pub fn new(vars: Vec<DecisionVar>, init: [f64; 2], bounds: [f64; 2]) -> Self {
        Self {
            vars,
            init,
            bounds,
            scale: None,
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale.unwrap_or_else(|| {
            let w = self.init[1] - self.init[0];
            if w > 0.0 {
                w
            } else {
                1.0
            }
        })
    }

    /// Display name: tied variables are joined with `=`.
    pub fn name(&self) -> String {
        self.vars.iter().map(|v| v.name()).collect::<Vec<_>>().join("=")
    }
}

/// Decision variables, ties, and the fixed parameters they overlay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentificationProblem {
    pub mode: ProblemMode,
    pub groups: Vec<VarGroup>,
    /// Plant parameters; decision variables overwrite the matching fields.
    pub fixed: VehicleParams<f64>,
    /// Speed the lateral model is linearized at, m/s.
    #[serde(default = "default_v_x")]
    pub v_x: f64,
    /// Closed-loop poles for the lane-keeping mode.
    #[serde(default = "default_poles")]
    pub poles: PoleSet,
}

fn default_v_x() -> f64 {
    1.0
}

pub(crate) fn default_poles() -> PoleSet {
    PoleSet::from_real(&[-5.0, -4.0, -7.0, -10.0]).expect("static poles are valid")
}

impl IdentificationProblem {
    pub fn validate(&self) -> Result<(), SysidError> {
        if self.groups.is_empty() {
            return Err(SysidError::Problem("no decision variables".into()));
        }
        let mut seen = Vec::new();
        for g in &self.groups {
            if g.vars.is_empty() {
                return Err(SysidError::Problem("empty variable group".into()));
            }
            for v in &g.vars {
                if !v.allowed_in(self.mode) {
                    return Err(SysidError::Problem(format!(
                        "`{v}` is not a decision variable in {:?} mode",
                        self.mode
                    )));
                }
                if seen.contains(v) {
                    return Err(SysidError::Problem(format!("`{v}` appears twice")));
                }
                seen.push(*v);
            }
            let [lo, hi] = g.init;
            let [blo, bhi] = g.bounds;
            if !(lo <= hi && blo <= bhi && blo <= lo && hi <= bhi) {
                return Err(SysidError::Problem(format!(
                    "`{}`: init range must lie inside bounds",
                    g.name()
                )));
            }
            if !(g.scale() > 0.0 && g.scale().is_finite()) {
                return Err(SysidError::Problem(format!("`{}`: scale must be positive", g.name())));
            }
        }
        self.fixed
            .validate()
            .map_err(|e| SysidError::Problem(e.to_string()))?;
        if !(self.v_x > 0.0) {
            return Err(SysidError::Problem("v_x must be positive".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.groups.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.groups.iter().map(VarGroup::name).collect()
    }

    pub fn scales(&self) -> Vec<f64> {
        self.groups.iter().map(VarGroup::scale).collect()
    }

    pub fn project(&self, values: &mut [f64]) {
        for (v, g) in values.iter_mut().zip(&self.groups) {
            *v = v.clamp(g.bounds[0], g.bounds[1]);
        }
    }

    fn lookup<T: Scalar>(&self, values: &[T], var: DecisionVar) -> Option<T> {
        self.groups
            .iter()
            .position(|g| g.vars.contains(&var))
            .map(|i| values[i])
    }

    /// Plant parameters with decision variables applied.
    pub fn vehicle<T: Scalar>(&self, values: &[T]) -> VehicleParams<T> {
        let mut p = self.fixed.lift::<T>();
        let set = |field: &mut T, var| {
            if let Some(v) = self.lookup(values, var) {
                *field = v;
            }
        };
        set(&mut p.m, DecisionVar::M);
        set(&mut p.l_f, DecisionVar::LF);
        set(&mut p.l_r, DecisionVar::LR);
        set(&mut p.c_sf, DecisionVar::CSf);
        set(&mut p.c_sr, DecisionVar::CSr);
        p
    }

    /// Controller-side lateral parameters. Stiffnesses not under
    /// identification come from the fixed vehicle.
    pub fn lateral<T: Scalar>(&self, values: &[T]) -> LateralParams<T> {
        let base = LateralParams::from_vehicle(&self.fixed.lift::<T>());
        let get = |var, default| self.lookup(values, var).unwrap_or(default);
        LateralParams {
            c_af: get(DecisionVar::CAf, base.c_af),
            c_ar: get(DecisionVar::CAr, base.c_ar),
            m: get(DecisionVar::M, base.m),
            i_z: base.i_z,
            l_f: get(DecisionVar::LF, base.l_f),
            l_r: get(DecisionVar::LR, base.l_r),
        }
    }

    /// Gains for the gain-direct mode; missing entries are zero.
    pub fn gains<T: Scalar>(&self, values: &[T]) -> GainVector<T> {
        use DecisionVar::*;
        GainVector([K1, K2, K3, K4].map(|k| self.lookup(values, k).unwrap_or(T::zero())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem() -> IdentificationProblem {
        IdentificationProblem {
            mode: ProblemMode::LaneKeeping,
            groups: vec![
                VarGroup::new(vec![DecisionVar::CAf, DecisionVar::CAr], [10.0, 50.0], [0.1, 1e4]),
                VarGroup::new(vec![DecisionVar::M], [0.5, 40.0], [0.01, 1e3]),
            ],
            fixed: VehicleParams::f1tenth(),
            v_x: 1.0,
            poles: default_poles(),
        }
    }

    #[test]
    fn ties_share_one_value() {
        let p = problem();
        p.validate().unwrap();
        let lat = p.lateral(&[20.0f64, 5.0]);
        assert_eq!(lat.c_af, 20.0);
        assert_eq!(lat.c_af.to_bits(), lat.c_ar.to_bits());
        assert_eq!(lat.m, 5.0);
        assert_eq!(lat.l_f, 0.159);
        assert_eq!(p.names(), vec!["c_af=c_ar", "m"]);
    }

    #[test]
    fn rejects_wrong_mode_variable() {
        let mut p = problem();
        p.groups.push(VarGroup::new(vec![DecisionVar::K1], [0.0, 0.0], [-1.0, 1.0]));
        assert!(p.validate().is_err());
    }

    #[test]
    fn rejects_duplicate_variable() {
        let mut p = problem();
        p.groups.push(VarGroup::new(vec![DecisionVar::M], [1.0, 2.0], [0.01, 10.0]));
        assert!(p.validate().is_err());
    }

    #[test]
    fn scale_defaults() {
        let g = VarGroup::new(vec![DecisionVar::K1], [0.0, 0.0], [-2.5, 2.5]);
        assert_eq!(g.scale(), 1.0);
        assert_eq!(problem().scales(), vec![40.0, 39.5]);
    }

    #[test]
    fn projection_clamps() {
        let p = problem();
        let mut v = [-3.0, 2e3];
        p.project(&mut v);
        assert_eq!(v, [0.1, 1e3]);
    }
}
