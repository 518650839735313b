use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::objective::{entry_loss, entry_loss_and_grad, Scoring};
use super::{Dataset, DatasetEntry, IdentificationProblem, Split, SysidError};
use crate::optim::{AdamConfig, AdamState, Bounds, CmaesConfig, CmaesState, EarlyStop, EarlyStopState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Cmaes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CmaesSettings {
    /// Initial step size in scaled coordinates.
    pub sigma0: f64,
    pub population: Option<usize>,
}

impl Default for CmaesSettings {
    fn default() -> Self {
        Self {
            sigma0: 0.3,
            population: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EarlyStopSettings {
    pub enabled: bool,
    pub patience: usize,
    pub val_every: usize,
}

impl Default for EarlyStopSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            patience: 5,
            val_every: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch: usize,
    pub adam: AdamConfig,
    pub cmaes: CmaesSettings,
    /// Validation cadence and stopping; stopping applies to Adam only.
    pub early_stop: EarlyStopSettings,
    /// Also evaluate the whole training split after every epoch. These
    /// evaluations are not counted in the rollout budget.
    pub track_full_loss: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            epochs: 100,
            batch: 4,
            adam: AdamConfig {
                lr: 0.05,
                ..Default::default()
            },
            cmaes: CmaesSettings::default(),
            early_stop: EarlyStopSettings::default(),
            track_full_loss: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch loss (Adam, at the pre-update point) or best finite
    /// candidate loss (CMA-ES); `None` when nothing finite was seen.
    pub train_loss: Option<f64>,
    pub val_loss: Option<f64>,
    pub full_train_loss: Option<f64>,
    /// Decision values after the update (CMA-ES: distribution mean).
    pub params: Vec<f64>,
    pub grad_norm: Option<f64>,
    /// Cumulative rollouts spent by the optimizer.
    pub evaluations: usize,
    /// Non-finite candidate losses in this epoch.
    pub non_finite: usize,
    pub wallclock: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    EarlyStopped { epoch: usize },
    /// Early stopping fired and no validation loss beat the first one.
    NoImprovement { epoch: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: serde_json::Value,
    pub names: Vec<String>,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub initial_params: Vec<f64>,
    pub final_params: Vec<f64>,
    pub records: Vec<EpochRecord>,
    pub stop: StopReason,
    pub wallclock: f64,
}

impl RunReport {
    pub fn best_train_loss(&self) -> Option<f64> {
        self.records
            .iter()
            .filter_map(|r| r.train_loss)
            .filter(|l| l.is_finite())
            .min_by(f64::total_cmp)
    }
}

/// Mean loss over `entries`; non-finite if any entry fails.
pub fn mean_loss(
    problem: &IdentificationProblem,
    scoring: &Scoring,
    entries: &[&DatasetEntry],
    values: &[f64],
) -> f64 {
    let losses: Vec<f64> = entries
        .par_iter()
        .map(|e| entry_loss(problem, scoring, e, values).unwrap_or(f64::NAN))
        .collect();
    losses.iter().sum::<f64>() / losses.len() as f64
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Uniform draw inside each group's initialization range.
pub fn initial_values(problem: &IdentificationProblem, rng: &mut ChaCha8Rng) -> Vec<f64> {
    problem
        .groups
        .iter()
        .map(|g| {
            let [lo, hi] = g.init;
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        })
        .collect()
}

/// Fit the problem's decision variables to the dataset.
pub fn identify(
    problem: &IdentificationProblem,
    data: &Dataset,
    scoring: &Scoring,
    settings: &TrainSettings,
    seed: u64,
) -> Result<RunReport, SysidError> {
    problem.validate()?;
    data.validate()?;
    if data.mode != problem.mode {
        return Err(SysidError::Problem(format!(
            "dataset mode {:?} does not match problem mode {:?}",
            data.mode, problem.mode
        )));
    }
    if settings.epochs == 0 || settings.batch == 0 {
        return Err(SysidError::Problem("epochs and batch must be positive".into()));
    }
    let start = Instant::now();
    let train = data.split(Split::Train);
    let val = data.split(Split::Val);
    let names = problem.names();
    let scales = problem.scales();
    let batch = settings.batch.min(train.len());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = initial_values(problem, &mut rng);
    let initial_params = values.clone();

    let mut early = EarlyStopState::new(settings.early_stop.patience, settings.early_stop.val_every)?;
    let mut first_val: Option<f64> = None;
    let mut evaluations = 0;
    let mut records = Vec::with_capacity(settings.epochs);
    let mut stop = StopReason::Completed;

    let mut adam = AdamState::new(settings.adam, problem.dim())?;
    let mut cmaes = match settings.optimizer {
        OptimizerKind::Adam => None,
        OptimizerKind::Cmaes => {
            let lower = problem.groups.iter().zip(&scales).map(|(g, s)| g.bounds[0] / s).collect();
            let upper = problem.groups.iter().zip(&scales).map(|(g, s)| g.bounds[1] / s).collect();
            let mean: Vec<f64> = values.iter().zip(&scales).map(|(v, s)| v / s).collect();
            let cfg = CmaesConfig {
                sigma0: settings.cmaes.sigma0,
                population: settings.cmaes.population,
                seed: rng.random(),
                bounds: Some(Bounds::new(lower, upper)?),
            };
            Some(CmaesState::new(&mean, &cfg)?)
        }
    };

    for epoch in 1..=settings.epochs {
        let mut picked = sample(&mut rng, train.len(), batch).into_vec();
        picked.sort_unstable();
        let batch_entries: Vec<&DatasetEntry> = picked.iter().map(|&i| train[i]).collect();

        let (train_loss, grad_norm, non_finite) = match cmaes.as_mut() {
            None => {
                let results: Vec<Result<(f64, Vec<f64>), SysidError>> = batch_entries
                    .par_iter()
                    .map(|e| entry_loss_and_grad(problem, scoring, e, &values))
                    .collect();
                let mut loss = 0.0;
                let mut grad = vec![0.0; values.len()];
                for r in results {
                    let (l, g) = r?;
                    loss += l;
                    grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                let n = batch_entries.len() as f64;
                loss /= n;
                if !loss.is_finite() {
                    return Err(SysidError::NonFiniteLoss { epoch });
                }
                // Gradient with respect to the scaled coordinates.
                let grad_u: Vec<f64> = grad.iter().zip(&scales).map(|(g, s)| g / n * s).collect();
                let mut u: Vec<f64> = values.iter().zip(&scales).map(|(v, s)| v / s).collect();
                let norm = adam.step(&mut u, &grad_u, &names)?;
                values = u.iter().zip(&scales).map(|(u, s)| u * s).collect();
                problem.project(&mut values);
                evaluations += batch_entries.len();
                (Some(loss), Some(norm), 0)
            }
            Some(es) => {
                let candidates = es.ask();
                let physical: Vec<Vec<f64>> = candidates
                    .iter()
                    .map(|c| {
                        let mut v: Vec<f64> = c.iter().zip(&scales).map(|(u, s)| u * s).collect();
                        problem.project(&mut v);
                        v
                    })
                    .collect();
                let fitness: Vec<f64> = physical
                    .par_iter()
                    .map(|v| mean_loss(problem, scoring, &batch_entries, v))
                    .collect();
                es.tell(&candidates, &fitness)?;
                values = es.mean.iter().zip(&scales).map(|(u, s)| u * s).collect();
                problem.project(&mut values);
                evaluations += candidates.len() * batch_entries.len();
                let best = fitness.iter().copied().filter(|f| f.is_finite()).min_by(f64::total_cmp);
                let bad = fitness.iter().filter(|f| !f.is_finite()).count();
                (best, None, bad)
            }
        };

        let full_train_loss = settings
            .track_full_loss
            .then(|| mean_loss(problem, scoring, &train, &values))
            .and_then(finite);
        let mut val_loss = None;
        let mut halt = false;
        if early.is_validation_epoch(epoch) {
            let v = mean_loss(problem, scoring, &val, &values);
            val_loss = finite(v);
            if first_val.is_none() {
                first_val = Some(v);
            }
            let decision = early.update(v);
            if settings.early_stop.enabled
                && settings.optimizer == OptimizerKind::Adam
                && decision == EarlyStop::Stop
            {
                let improved = match first_val {
                    Some(f) if f.is_finite() => early.best_val < f,
                    _ => early.improved(),
                };
                stop = if improved {
                    StopReason::EarlyStopped { epoch }
                } else {
                    StopReason::NoImprovement { epoch }
                };
                halt = true;
            }
        }
        records.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            full_train_loss,
            params: values.clone(),
            grad_norm,
            evaluations,
            non_finite,
            wallclock: start.elapsed().as_secs_f64(),
        });
        if halt {
            break;
        }
    }

    let config = serde_json::json!({
        "problem": problem,
        "scoring": scoring,
        "train": settings,
    });
    Ok(RunReport {
        config,
        names,
        seed,
        optimizer: settings.optimizer,
        initial_params,
        final_params: values,
        records,
        stop,
        wallclock: start.elapsed().as_secs_f64(),
    })
}

/// Independent runs for each seed, in seed order.
pub fn identify_seeds(
    problem: &IdentificationProblem,
    data: &Dataset,
    scoring: &Scoring,
    settings: &TrainSettings,
    seeds: &[u64],
) -> Vec<Result<RunReport, SysidError>> {
    seeds
        .par_iter()
        .map(|&s| identify(problem, data, scoring, settings, s))
        .collect()
}

/// One point of a seed-averaged loss curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub split: Split,
    /// Mean over runs with a finite value; `None` if there were none.
    pub loss: Option<f64>,
    /// How many runs contributed.
    pub runs: usize,
}

/// Average train and val curves across runs, skipping missing values.
pub fn average_curves(reports: &[RunReport]) -> Vec<CurvePoint> {
    let max_epoch = reports
        .iter()
        .flat_map(|r| r.records.last().map(|x| x.epoch))
        .max()
        .unwrap_or(0);
    let mut out = Vec::new();
    for epoch in 1..=max_epoch {
        for split in [Split::Train, Split::Val] {
            let vals: Vec<f64> = reports
                .iter()
                .filter_map(|r| r.records.iter().find(|x| x.epoch == epoch))
                .filter_map(|x| match split {
                    Split::Train => x.train_loss,
                    Split::Val => x.val_loss,
                })
                .filter(|v| v.is_finite())
                .collect();
            let any_validation = split == Split::Train
                || reports
                    .iter()
                    .filter_map(|r| r.records.iter().find(|x| x.epoch == epoch))
                    .any(|x| x.val_loss.is_some());
            if !any_validation {
                continue;
            }
            let loss = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
            out.push(CurvePoint {
                epoch,
                split,
                loss,
                runs: vals.len(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{RolloutConfig, VehicleParams};
    use crate::sysid::problem::default_poles;
    use crate::sysid::{generate_ground_truth, DecisionVar, GenerateSpec, ProblemMode, VarGroup};

    fn short(steps: usize) -> RolloutConfig {
        RolloutConfig {
            steps,
            ..Default::default()
        }
    }

    fn recovery(init: Option<[f64; 4]>) -> IdentificationProblem {
        let truth = VehicleParams::f1tenth();
        let group = |var, range: [f64; 2], bounds, at: Option<f64>| VarGroup {
            vars: vec![var],
            init: at.map_or(range, |v| [v, v]),
            bounds,
            scale: Some(range[1] - range[0]),
        };
        let at = |i: usize| init.map(|v| v[i]);
        IdentificationProblem {
            mode: ProblemMode::TrajectoryMatch,
            groups: vec![
                group(DecisionVar::LF, [0.1, 0.25], [0.01, 1.0], at(0)),
                group(DecisionVar::LR, [0.1, 0.25], [0.01, 1.0], at(1)),
                group(DecisionVar::CSf, [3.0, 8.0], [0.1, 50.0], at(2)),
                group(DecisionVar::CSr, [3.0, 8.0], [0.1, 50.0], at(3)),
            ],
            fixed: truth,
            v_x: 1.0,
            poles: default_poles(),
        }
    }

    fn recovery_data(steps: usize) -> Dataset {
        generate_ground_truth(
            &VehicleParams::f1tenth(),
            &GenerateSpec::default(),
            ProblemMode::TrajectoryMatch,
            &short(steps),
            0,
        )
        .unwrap()
    }

    fn scoring(steps: usize) -> Scoring {
        let mut s = Scoring::trajectory_match(short(steps));
        s.loss.gamma = 1e-4;
        s
    }

    #[test]
    fn truth_is_a_fixed_point() {
        let t = VehicleParams::f1tenth();
        let truth = [t.l_f, t.l_r, t.c_sf, t.c_sr];
        let problem = recovery(Some(truth));
        let data = recovery_data(300);
        for e in &data.entries {
            let (loss, grad) = entry_loss_and_grad(&problem, &scoring(300), e, &truth).unwrap();
            assert!(loss.abs() < 1e-12, "{loss}");
            assert!(grad.iter().all(|g| g.abs() < 1e-12), "{grad:?}");
        }
        // Adam's normalized steps dither around the minimum with amplitude
        // near lr, so the drift bound needs a small rate.
        let settings = TrainSettings {
            epochs: 10,
            adam: AdamConfig {
                lr: 1e-3,
                ..Default::default()
            },
            ..Default::default()
        };
        let r = identify(&problem, &data, &scoring(300), &settings, 0).unwrap();
        for (a, b) in r.final_params.iter().zip(&r.initial_params) {
            assert!(((a - b) / b).abs() < 0.01, "{a} vs {b}");
        }
    }

    #[test]
    fn same_seed_same_report() {
        let problem = recovery(None);
        let data = recovery_data(200);
        let settings = TrainSettings {
            epochs: 6,
            track_full_loss: true,
            ..Default::default()
        };
        let strip = |mut r: RunReport| {
            r.wallclock = 0.0;
            r.records.iter_mut().for_each(|x| x.wallclock = 0.0);
            r
        };
        let a = strip(identify(&problem, &data, &scoring(200), &settings, 3).unwrap());
        let b = strip(identify(&problem, &data, &scoring(200), &settings, 3).unwrap());
        assert_eq!(a, b);
        let c = strip(identify(&problem, &data, &scoring(200), &settings, 4).unwrap());
        assert_ne!(a.initial_params, c.initial_params);
    }

    #[test]
    fn cmaes_counts_population_times_batch() {
        let problem = recovery(None);
        let data = recovery_data(200);
        let settings = TrainSettings {
            optimizer: OptimizerKind::Cmaes,
            epochs: 3,
            ..Default::default()
        };
        let r = identify(&problem, &data, &scoring(200), &settings, 0).unwrap();
        // Four variables give a population of 8.
        let evals: Vec<usize> = r.records.iter().map(|x| x.evaluations).collect();
        assert_eq!(evals, vec![32, 64, 96]);
        for x in &r.records {
            for (v, g) in x.params.iter().zip(&problem.groups) {
                assert!((g.bounds[0]..=g.bounds[1]).contains(v));
            }
        }
    }

    fn lane_problem(mode: ProblemMode, groups: Vec<VarGroup>) -> (IdentificationProblem, Dataset, Scoring) {
        let cfg = short(400);
        let data = generate_ground_truth(&VehicleParams::f1tenth(), &GenerateSpec::default(), mode, &cfg, 1).unwrap();
        let mut scoring = Scoring::lane_keeping(cfg, 1.0);
        scoring.loss.t_cls = 0;
        scoring.loss.t_vs = 0;
        let problem = IdentificationProblem {
            mode,
            groups,
            fixed: VehicleParams::f1tenth(),
            v_x: 1.0,
            poles: default_poles(),
        };
        (problem, data, scoring)
    }

    #[test]
    fn tied_variables_stay_identical() {
        let (problem, data, scoring) = lane_problem(
            ProblemMode::LaneKeeping,
            vec![
                VarGroup::new(vec![DecisionVar::CAf, DecisionVar::CAr], [10.0, 50.0], [0.1, 1e4]),
                VarGroup::new(vec![DecisionVar::M], [1.0, 10.0], [0.1, 100.0]),
            ],
        );
        let settings = TrainSettings {
            epochs: 5,
            ..Default::default()
        };
        let r = identify(&problem, &data, &scoring, &settings, 0).unwrap();
        assert_eq!(r.names, vec!["c_af=c_ar", "m"]);
        for x in &r.records {
            let lat = problem.lateral(&x.params);
            assert_eq!(lat.c_af.to_bits(), lat.c_ar.to_bits());
        }
    }

    #[test]
    fn gain_direct_from_zero_improves() {
        let k = |v| VarGroup::new(vec![v], [0.0, 0.0], [-2.5, 2.5]);
        let (problem, data, scoring) = lane_problem(
            ProblemMode::GainDirect,
            vec![k(DecisionVar::K1), k(DecisionVar::K2), k(DecisionVar::K3), k(DecisionVar::K4)],
        );
        let settings = TrainSettings {
            epochs: 8,
            adam: AdamConfig {
                lr: 0.2,
                ..Default::default()
            },
            early_stop: EarlyStopSettings {
                enabled: false,
                ..Default::default()
            },
            track_full_loss: true,
            ..Default::default()
        };
        let r = identify(&problem, &data, &scoring, &settings, 0).unwrap();
        assert_eq!(r.initial_params, vec![0.0; 4]);
        let first = r.records[0].full_train_loss.unwrap();
        let last = r.records.last().unwrap().full_train_loss.unwrap();
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn mode_mismatch_rejected() {
        let problem = recovery(None);
        let (_, lane_data, _) = lane_problem(ProblemMode::LaneKeeping, vec![]);
        let err = identify(&problem, &lane_data, &scoring(100), &TrainSettings::default(), 0);
        assert!(matches!(err, Err(SysidError::Problem(_))));
    }

    fn record(epoch: usize, train: f64, val: Option<f64>) -> EpochRecord {
        EpochRecord {
            epoch,
            train_loss: Some(train),
            val_loss: val,
            full_train_loss: None,
            params: vec![],
            grad_norm: None,
            evaluations: 0,
            non_finite: 0,
            wallclock: 0.0,
        }
    }

    #[test]
    fn curves_average_available_runs() {
        let report = |records| RunReport {
            config: serde_json::Value::Null,
            names: vec![],
            seed: 0,
            optimizer: OptimizerKind::Adam,
            initial_params: vec![],
            final_params: vec![],
            records,
            stop: StopReason::Completed,
            wallclock: 0.0,
        };
        let a = report(vec![record(1, 2.0, None), record(2, 4.0, Some(1.0))]);
        let b = report(vec![record(1, 4.0, None)]);
        let c = average_curves(&[a, b]);
        assert_eq!(c.len(), 3);
        assert_eq!((c[0].epoch, c[0].split, c[0].loss, c[0].runs), (1, Split::Train, Some(3.0), 2));
        assert_eq!((c[1].epoch, c[1].split, c[1].loss, c[1].runs), (2, Split::Train, Some(4.0), 1));
        assert_eq!((c[2].epoch, c[2].split, c[2].loss, c[2].runs), (2, Split::Val, Some(1.0), 1));
    }
}
