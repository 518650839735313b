use serde::{Deserialize, Serialize};

use super::{DatasetEntry, IdentificationProblem, ProblemMode, SysidError};
use crate::control::{
    build_lateral_model, place_poles, simulate_lane_keeping, ErrorFilter, GainVector,
    LaneKeepingSetup,
};
use crate::dynamics::{rollout, PlantInput, PlantState, RolloutConfig};
use crate::grad::{seed_values, Objective};
use crate::losses::{lane_keeping_loss, trajectory_match_loss, LossConfig, TrajPoint, Trajectory};
use crate::scalar::Scalar;

/// How a candidate is rolled out and scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scoring {
    pub loss: LossConfig,
    pub rollout: RolloutConfig,
    /// Keep every n-th state when comparing trajectories.
    pub sample_every: usize,
    pub filter: ErrorFilter,
}

impl Scoring {
    pub fn trajectory_match(rollout: RolloutConfig) -> Self {
        Self {
            loss: LossConfig::trajectory_match(),
            rollout,
            sample_every: 25,
            filter: ErrorFilter::default(),
        }
    }

    pub fn lane_keeping(rollout: RolloutConfig, v_x: f64) -> Self {
        Self {
            loss: LossConfig::lane_keeping(v_x),
            rollout,
            sample_every: 1,
            filter: ErrorFilter::default(),
        }
    }
}

fn planar<T: Scalar>(states: &[PlantState<T>], dt: f64, every: usize) -> Result<Trajectory<T>, SysidError> {
    let pts = states
        .iter()
        .enumerate()
        .step_by(every.max(1))
        .map(|(i, s)| TrajPoint {
            t: i as f64 * dt,
            x: s.s_x,
            y: s.s_y,
            v: Some(s.v),
            errors: None,
        })
        .collect();
    Ok(Trajectory::new(pts)?)
}

/// Loss of one dataset entry under decision values `values`.
pub fn entry_loss<T: Scalar>(
    problem: &IdentificationProblem,
    scoring: &Scoring,
    entry: &DatasetEntry,
    values: &[T],
) -> Result<T, SysidError> {
    let cfg = scoring.rollout;
    match problem.mode {
        ProblemMode::TrajectoryMatch => {
            let params = problem.vehicle(values);
            let replay = RolloutConfig {
                steps: entry.commands.len(),
                ..cfg
            };
            let states = rollout(
                entry.initial.lift::<T>(),
                |t, _| {
                    let [d, v] = entry.commands[t];
                    PlantInput::direct(T::cst(d), T::cst(v))
                },
                &params,
                &replay,
            )?;
            let sim = planar(&states, cfg.dt, scoring.sample_every)?;
            let reference = planar(&entry.reference, cfg.dt, scoring.sample_every)?;
            let reference = lift_trajectory(&reference)?;
            Ok(trajectory_match_loss(&sim, &reference, &scoring.loss)?)
        }
        ProblemMode::LaneKeeping | ProblemMode::GainDirect => {
            let gains = if problem.mode == ProblemMode::LaneKeeping {
                let model = build_lateral_model(&problem.lateral(values), problem.v_x)?;
                place_poles(&model, &problem.poles)?
            } else {
                problem.gains(values)
            };
            closed_loop_loss(problem, scoring, entry, &gains)
        }
    }
}

fn lift_trajectory<T: Scalar>(t: &Trajectory<f64>) -> Result<Trajectory<T>, SysidError> {
    let pts = t
        .points()
        .iter()
        .map(|p| TrajPoint {
            t: p.t,
            x: T::cst(p.x),
            y: T::cst(p.y),
            v: p.v.map(T::cst),
            errors: None,
        })
        .collect();
    Ok(Trajectory::new(pts)?)
}

fn closed_loop_loss<T: Scalar>(
    problem: &IdentificationProblem,
    scoring: &Scoring,
    entry: &DatasetEntry,
    gains: &GainVector<T>,
) -> Result<T, SysidError> {
    let circle = entry
        .circle
        .ok_or_else(|| SysidError::Dataset(format!("entry {} lacks a reference circle", entry.id)))?;
    let setup = LaneKeepingSetup {
        circle,
        v_x: scoring.loss.v_x,
        filter: scoring.filter,
    };
    let plant = problem.fixed.lift::<T>();
    let trace = simulate_lane_keeping(gains, &plant, entry.initial.lift(), &setup, &scoring.rollout)?;
    let velocities: Vec<T> = trace.states.iter().map(|s| s.v).collect();
    Ok(lane_keeping_loss(&trace.errors, &velocities, &scoring.loss)?)
}

/// Loss and gradient with respect to every decision scalar.
pub fn entry_loss_and_grad(
    problem: &IdentificationProblem,
    scoring: &Scoring,
    entry: &DatasetEntry,
    values: &[f64],
) -> Result<(f64, Vec<f64>), SysidError> {
    let duals = seed_values(values);
    let loss = entry_loss(problem, scoring, entry, &duals)?;
    Ok((loss.value(), loss.gradient(values.len())))
}

/// Adapter for gradient checking: non-finite or failed evaluations become NaN.
pub struct EntryObjective<'a> {
    pub problem: &'a IdentificationProblem,
    pub scoring: &'a Scoring,
    pub entry: &'a DatasetEntry,
}

impl Objective for EntryObjective<'_> {
    fn eval<T: Scalar>(&self, params: &[T]) -> T {
        entry_loss(self.problem, self.scoring, self.entry, params).unwrap_or_else(|_| T::nan())
    }
}
