//! Experiment configuration: a strict TOML document resolved against
//! per-mode defaults.

use std::fs;
use std::path::{Path, PathBuf};

use diffsteer::control::{Direction, ErrorFilter, PoleSet, ReferenceCircle};
use diffsteer::dynamics::{Integrator, RolloutConfig, VehicleParams};
use diffsteer::optim::AdamConfig;
use diffsteer::sysid::{
    CmaesSettings, DecisionVar, EarlyStopSettings, GenerateSpec, IdentificationProblem,
    OptimizerKind, ProblemMode, Scoring, TrainSettings, VarGroup,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Overrides for individual vehicle parameters; unset fields keep the
/// F1TENTH reference values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSection {
    /// kg
    pub m: Option<f64>,
    /// m
    pub l_f: Option<f64>,
    /// m
    pub l_r: Option<f64>,
    /// kg m^2
    pub i_z: Option<f64>,
    /// m
    pub h_cg: Option<f64>,
    pub mu: Option<f64>,
    /// 1/rad
    pub c_sf: Option<f64>,
    /// 1/rad
    pub c_sr: Option<f64>,
    /// m
    pub r_w: Option<f64>,
    /// rad
    pub delta_max: Option<f64>,
    /// m/s^2
    pub g: Option<f64>,
}

impl VehicleSection {
    pub fn apply(&self, base: VehicleParams<f64>) -> VehicleParams<f64> {
        let mut p = base;
        let pairs = [
            (&mut p.m, self.m),
            (&mut p.l_f, self.l_f),
            (&mut p.l_r, self.l_r),
            (&mut p.i_z, self.i_z),
            (&mut p.h_cg, self.h_cg),
            (&mut p.mu, self.mu),
            (&mut p.c_sf, self.c_sf),
            (&mut p.c_sr, self.c_sr),
            (&mut p.r_w, self.r_w),
            (&mut p.delta_max, self.delta_max),
            (&mut p.g, self.g),
        ];
        for (field, value) in pairs {
            if let Some(v) = value {
                *field = v;
            }
        }
        p
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutSection {
    /// s
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub integrator: Option<Integrator>,
    /// m/s
    pub v_switch: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub mode: Option<ProblemMode>,
    pub groups: Option<Vec<VarGroup>>,
    /// Controller-side or starting parameters, overlaid on `[vehicle]`.
    pub fixed: Option<VehicleSection>,
    /// Linearization and commanded speed, m/s.
    pub v_x: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub t_cls: Option<usize>,
    pub t_vs: Option<usize>,
    pub sample_every: Option<usize>,
    pub filter: Option<ErrorFilter>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub kind: Option<OptimizerKind>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub eps: Option<f64>,
    pub weight_decay: Option<f64>,
    pub clip_norm: Option<f64>,
    pub sigma0: Option<f64>,
    pub population: Option<usize>,
    pub early_stop: Option<bool>,
    pub patience: Option<usize>,
    pub val_every: Option<usize>,
    pub track_full_loss: Option<bool>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    /// m
    pub radius: Option<f64>,
    pub direction: Option<Direction>,
}

/// The document as written.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    /// Number of consecutive seeds for `identify`.
    pub seeds: Option<usize>,
    pub out: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    /// Ground-truth plant.
    pub vehicle: Option<VehicleSection>,
    pub rollout: Option<RolloutSection>,
    pub generate: Option<GenerateSpec>,
    pub problem: Option<ProblemSection>,
    pub losses: Option<LossSection>,
    pub optimizer: Option<OptimizerSection>,
    pub poles: Option<PoleSet>,
    pub reference: Option<ReferenceSection>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub optimizer: Option<OptimizerKind>,
    pub out: Option<PathBuf>,
    pub count: Option<usize>,
    pub seeds: Option<usize>,
    pub dataset: Option<PathBuf>,
}

/// Every setting made concrete; embedded in each output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub seed: u64,
    pub seeds: usize,
    pub out: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub vehicle: VehicleParams<f64>,
    pub rollout: RolloutConfig,
    pub generate: GenerateSpec,
    pub problem: IdentificationProblem,
    pub scoring: Scoring,
    pub train: TrainSettings,
    pub reference: ReferenceCircle,
}

fn default_groups(mode: ProblemMode, optimizer: OptimizerKind) -> Vec<VarGroup> {
    use DecisionVar::*;
    match mode {
        ProblemMode::TrajectoryMatch => vec![
            VarGroup::new(vec![LF], [0.1, 0.25], [0.01, 1.0]),
            VarGroup::new(vec![LR], [0.1, 0.25], [0.01, 1.0]),
            VarGroup::new(vec![CSf], [3.0, 8.0], [0.1, 50.0]),
            VarGroup::new(vec![CSr], [3.0, 8.0], [0.1, 50.0]),
        ],
        ProblemMode::LaneKeeping => vec![
            VarGroup::new(vec![CAf, CAr], [10.0, 50.0], [0.1, 1e4]),
            VarGroup::new(vec![M], [0.5, 40.0], [0.01, 1e3]),
        ],
        ProblemMode::GainDirect => {
            let init = match optimizer {
                OptimizerKind::Adam => [0.0, 0.0],
                OptimizerKind::Cmaes => [-2.5, 2.5],
            };
            [K1, K2, K3, K4]
                .into_iter()
                .map(|k| VarGroup::new(vec![k], init, [-2.5, 2.5]))
                .collect()
        }
    }
}

fn default_poles() -> PoleSet {
    PoleSet::from_real(&[-5.0, -4.0, -7.0, -10.0]).expect("static poles are valid")
}

impl ExperimentConfig {
    pub fn resolve(&self, flags: &Overrides) -> Result<ResolvedConfig, CliError> {
        let problem_section = self.problem.clone().unwrap_or_default();
        let mode = problem_section.mode.unwrap_or(ProblemMode::TrajectoryMatch);
        let closed_loop = mode != ProblemMode::TrajectoryMatch;
        let vehicle = self.vehicle.unwrap_or_default().apply(VehicleParams::f1tenth());
        vehicle.validate().map_err(|e| CliError::Config(format!("[vehicle]: {e}")))?;

        let r = self.rollout.unwrap_or_default();
        let base = RolloutConfig::default();
        let rollout = RolloutConfig {
            dt: r.dt.unwrap_or(base.dt),
            steps: r.steps.unwrap_or(if closed_loop { 7000 } else { base.steps }),
            integrator: r.integrator.unwrap_or(base.integrator),
            v_switch: r.v_switch.unwrap_or(base.v_switch),
        };
        rollout.validate().map_err(|e| CliError::Config(format!("[rollout]: {e}")))?;

        let mut generate = self.generate.unwrap_or_default();
        if let Some(count) = flags.count {
            generate.count = count;
        }

        let o = self.optimizer.unwrap_or_default();
        let kind = flags.optimizer.or(o.kind).unwrap_or_default();
        let adam_base = AdamConfig::default();
        let train = TrainSettings {
            optimizer: kind,
            epochs: flags.epochs.or(o.epochs).unwrap_or(100),
            batch: flags.batch.or(o.batch).unwrap_or(4),
            adam: AdamConfig {
                lr: o.lr.unwrap_or(if mode == ProblemMode::GainDirect { 0.2 } else { 0.05 }),
                beta1: o.beta1.unwrap_or(adam_base.beta1),
                beta2: o.beta2.unwrap_or(adam_base.beta2),
                eps: o.eps.unwrap_or(adam_base.eps),
                weight_decay: o.weight_decay.unwrap_or(adam_base.weight_decay),
                clip_norm: o.clip_norm.or(adam_base.clip_norm),
            },
            cmaes: CmaesSettings {
                sigma0: o.sigma0.unwrap_or(CmaesSettings::default().sigma0),
                population: o.population,
            },
            early_stop: EarlyStopSettings {
                enabled: o.early_stop.unwrap_or(closed_loop),
                patience: o.patience.unwrap_or(5),
                val_every: o.val_every.unwrap_or(4),
            },
            track_full_loss: o.track_full_loss.unwrap_or(false),
        };
        train
            .adam
            .validate()
            .map_err(|e| CliError::Config(format!("[optimizer]: {e}")))?;
        if train.epochs == 0 || train.batch == 0 {
            return Err(CliError::Config("[optimizer]: epochs and batch must be positive".into()));
        }

        let v_x = problem_section.v_x.unwrap_or(1.0);
        let problem = IdentificationProblem {
            mode,
            groups: problem_section
                .groups
                .clone()
                .unwrap_or_else(|| default_groups(mode, kind)),
            fixed: problem_section.fixed.unwrap_or_default().apply(vehicle),
            v_x,
            poles: self.poles.clone().unwrap_or_else(default_poles),
        };
        problem
            .validate()
            .map_err(|e| CliError::Config(format!("[problem]: {e}")))?;

        let l = self.losses.unwrap_or_default();
        let mut scoring = if closed_loop {
            Scoring::lane_keeping(rollout, v_x)
        } else {
            Scoring::trajectory_match(rollout)
        };
        scoring.loss.lambda = l.lambda.unwrap_or(scoring.loss.lambda);
        scoring.loss.gamma = l.gamma.unwrap_or(scoring.loss.gamma);
        scoring.loss.t_cls = l.t_cls.unwrap_or(scoring.loss.t_cls);
        scoring.loss.t_vs = l.t_vs.unwrap_or(scoring.loss.t_vs);
        scoring.sample_every = l.sample_every.unwrap_or(scoring.sample_every);
        scoring.filter = l.filter.unwrap_or(scoring.filter);
        scoring
            .loss
            .validate()
            .map_err(|e| CliError::Config(format!("[losses]: {e}")))?;
        if scoring.sample_every == 0 {
            return Err(CliError::Config("[losses]: sample_every must be positive".into()));
        }
        if closed_loop && scoring.loss.t_cls.max(scoring.loss.t_vs) > rollout.steps {
            return Err(CliError::Config(
                "[losses]: t_cls and t_vs must not exceed rollout.steps".into(),
            ));
        }

        let rs = self.reference.unwrap_or_default();
        let reference = ReferenceCircle::offset_from_origin(
            rs.radius.unwrap_or(30.0),
            rs.direction.unwrap_or(Direction::Ccw),
        )
        .map_err(|e| CliError::Config(format!("[reference]: {e}")))?;

        let seeds = flags.seeds.or(self.seeds).unwrap_or(1);
        if seeds == 0 {
            return Err(CliError::Config("seeds must be at least 1".into()));
        }
        Ok(ResolvedConfig {
            seed: flags.seed.or(self.seed).unwrap_or(0),
            seeds,
            out: flags.out.clone().or_else(|| self.out.clone()),
            dataset: flags.dataset.clone().or_else(|| self.dataset.clone()),
            vehicle,
            rollout,
            generate,
            problem,
            scoring,
            train,
            reference,
        })
    }
}

impl ResolvedConfig {
    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Config("no output directory: pass --out or set `out`".into()))
    }
}
