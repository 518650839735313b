//! The four subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use diffsteer::control::{
    build_lateral_model, closed_loop_eigs, multiset_distance, place_poles, GainVector, LateralParams,
};
use diffsteer::grad::{check_gradient, GradientReport, Objective};
use diffsteer::sysid::{
    average_curves, derive_gains, evaluate_controller, evaluate_gains, generate_ground_truth,
    identify_seeds, Dataset, Evaluation, IdentificationProblem, ProblemMode, RunReport, StopReason,
};
use diffsteer::Scalar;
use serde::{Deserialize, Serialize};

use crate::config::ResolvedConfig;
use crate::error::CliError;
use crate::output::{
    curve_csv, errors_csv, loss_csv, params_csv, trajectory_csv, write_atomic, write_json,
};

/// How a successful command finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// At least one run stopped early without beating its first validation.
    NoImprovement,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::NoImprovement => 4,
        }
    }
}

/// Dataset file written by `generate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: ResolvedConfig,
    pub dataset: Dataset,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn true_gains(cfg: &ResolvedConfig) -> Result<GainVector<f64>, CliError> {
    Ok(derive_gains(&cfg.vehicle, cfg.problem.v_x, &cfg.problem.poles)?)
}

/// Synthesize a dataset, one trajectory CSV per entry plus `dataset.json`.
///
/// Open-loop entries store the recorded reference states; closed-loop entries
/// store the run of the lane keeper designed on the true parameters.
pub fn generate(cfg: &ResolvedConfig) -> Result<Outcome, CliError> {
    let out = cfg.out_dir()?;
    let data = generate_ground_truth(&cfg.vehicle, &cfg.generate, cfg.problem.mode, &cfg.rollout, cfg.seed)?;
    let gains = match cfg.problem.mode {
        ProblemMode::TrajectoryMatch => None,
        _ => Some(true_gains(cfg)?),
    };
    for e in &data.entries {
        let states = match gains {
            None => e.reference.clone(),
            Some(k) => {
                let circle = e.circle.expect("closed-loop entries carry a circle");
                evaluate_gains(&k, &[], &cfg.vehicle, &circle, &cfg.rollout, cfg.problem.v_x, &cfg.scoring.filter)?
                    .states
            }
        };
        let path = out.join("trajectories").join(format!("traj_{:03}.csv", e.id));
        write_atomic(&path, &trajectory_csv(&states, cfg.rollout.dt)?)?;
    }
    write_json(
        &out.join("dataset.json"),
        &DatasetManifest {
            config: cfg.clone(),
            dataset: data,
        },
    )?;
    println!("wrote {} trajectories to {}", cfg.generate.count, out.display());
    Ok(Outcome::Success)
}

fn load_or_generate(cfg: &ResolvedConfig) -> Result<Dataset, CliError> {
    match &cfg.dataset {
        Some(path) => Ok(read_json::<DatasetManifest>(path)?.dataset),
        None => Ok(generate_ground_truth(
            &cfg.vehicle,
            &cfg.generate,
            cfg.problem.mode,
            &cfg.rollout,
            cfg.seed,
        )?),
    }
}

fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

/// Fit the decision variables for `cfg.seeds` consecutive seeds.
///
/// Each seed gets `report.json`, `losses.csv` and `params.csv`; several seeds
/// add `losses_mean.csv`. Without a dataset path the dataset is generated
/// from the config.
pub fn identify(cfg: &ResolvedConfig) -> Result<(Outcome, Vec<RunReport>), CliError> {
    let out = cfg.out_dir()?;
    let data = load_or_generate(cfg)?;
    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|i| cfg.seed + i).collect();
    let reports = identify_seeds(&cfg.problem, &data, &cfg.scoring, &cfg.train, &seeds)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut outcome = Outcome::Success;
    for r in &reports {
        let dir = seed_dir(out, r.seed);
        write_json(&dir.join("report.json"), r)?;
        write_atomic(&dir.join("losses.csv"), &loss_csv(&r.records)?)?;
        write_atomic(&dir.join("params.csv"), &params_csv(&r.names, &r.records)?)?;
        let last = r.records.last().and_then(|x| x.train_loss);
        println!(
            "seed {}: {} epochs, stop {:?}, last train loss {}, params {}",
            r.seed,
            r.records.len(),
            r.stop,
            last.map_or("n/a".into(), |l| format!("{l:.6e}")),
            r.names
                .iter()
                .zip(&r.final_params)
                .map(|(n, v)| format!("{n}={v:.6}"))
                .collect::<Vec<_>>()
                .join(" ")
        );
        if matches!(r.stop, StopReason::NoImprovement { .. }) {
            outcome = Outcome::NoImprovement;
        }
    }
    if reports.len() > 1 {
        write_atomic(&out.join("losses_mean.csv"), &curve_csv(&average_curves(&reports))?)?;
    }
    Ok((outcome, reports))
}

/// One gain component as a function of the lateral-model parameters
/// `[m, l_f, l_r, c_af, c_ar, i_z]`.
struct GainComponent<'a> {
    cfg: &'a ResolvedConfig,
    index: usize,
}

pub const LATERAL_NAMES: [&str; 6] = ["m", "l_f", "l_r", "c_af", "c_ar", "i_z"];

fn lateral_array(p: &LateralParams<f64>) -> [f64; 6] {
    [p.m, p.l_f, p.l_r, p.c_af, p.c_ar, p.i_z]
}

impl Objective for GainComponent<'_> {
    fn eval<T: Scalar>(&self, v: &[T]) -> T {
        let params = LateralParams {
            m: v[0],
            l_f: v[1],
            l_r: v[2],
            c_af: v[3],
            c_ar: v[4],
            i_z: v[5],
        };
        build_lateral_model(&params, self.cfg.problem.v_x)
            .and_then(|m| place_poles(&m, &self.cfg.problem.poles))
            .map(|k| k.0[self.index])
            .unwrap_or_else(|_| T::nan())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainsFile {
    pub gains: GainVector<f64>,
    pub eigenvalues: Vec<[f64; 2]>,
    pub placement_error: f64,
    pub lateral: LateralParams<f64>,
    pub v_x: f64,
}

/// Place the configured poles on the lateral model of `problem.fixed`.
pub fn gains(cfg: &ResolvedConfig, check_grad: bool) -> Result<(GainsFile, Vec<GradientReport>), CliError> {
    let lateral = LateralParams::from_vehicle(&cfg.problem.fixed);
    let model = build_lateral_model(&lateral, cfg.problem.v_x)?;
    let k = place_poles(&model, &cfg.problem.poles)?;
    let eigs = closed_loop_eigs(&model, &k);
    let placement_error = multiset_distance(&eigs, cfg.problem.poles.poles());

    println!(
        "K = [{}]",
        k.0.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
    );
    println!("{:>12} {:>12}", "re", "im");
    for c in &eigs {
        println!("{:>12.6} {:>12.6}", c.re, c.im);
    }
    println!("placement error {placement_error:.3e}");

    let mut reports = Vec::new();
    if check_grad {
        let at = lateral_array(&lateral);
        for index in 0..4 {
            let r = check_gradient(&GainComponent { cfg, index }, &at, 1e-5)?;
            println!("d k{} / d param (analytic, numeric):", index + 1);
            for ((name, a), n) in LATERAL_NAMES.iter().zip(&r.analytic).zip(&r.numeric) {
                println!("  {name:>5} {a:>16.8e} {n:>16.8e}");
            }
            println!("  max relative error {:.3e}", r.max_rel_err);
            reports.push(r);
        }
    }
    let file = GainsFile {
        gains: k,
        eigenvalues: eigs.iter().map(|c| [c.re, c.im]).collect(),
        placement_error,
        lateral,
        v_x: cfg.problem.v_x,
    };
    if let Some(out) = &cfg.out {
        write_json(&out.join("gains.json"), &file)?;
        if check_grad {
            write_json(&out.join("gain_gradients.json"), &reports)?;
        }
    }
    Ok((file, reports))
}

/// Where `evaluate` takes its gains from.
#[derive(Debug, Clone, PartialEq)]
pub enum GainSource {
    /// Designed on the true vehicle.
    True,
    /// Designed from the final parameters of a run report.
    Identified(PathBuf),
    /// Read from a JSON file holding `[k1, k2, k3, k4]` or `{"gains": [...]}`.
    File(PathBuf),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GainsInput {
    Bare(GainVector<f64>),
    Wrapped { gains: GainVector<f64> },
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationSummary<'a> {
    pub source: String,
    pub gains: GainVector<f64>,
    pub eigenvalues: &'a [[f64; 2]],
    pub circle: diffsteer::control::ReferenceCircle,
    pub v_x: f64,
    pub steady_state: diffsteer::sysid::SteadyState,
    pub config: &'a ResolvedConfig,
}

fn identified_gains(path: &Path) -> Result<(GainVector<f64>, Vec<[f64; 2]>), CliError> {
    let report: RunReport = read_json(path)?;
    let parse_err = |message: String| CliError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let problem: IdentificationProblem = serde_json::from_value(report.config["problem"].clone())
        .map_err(|e| parse_err(format!("report config: {e}")))?;
    let values = &report.final_params;
    if values.len() != problem.dim() {
        return Err(parse_err("final_params do not match the problem".into()));
    }
    let lateral = match problem.mode {
        ProblemMode::GainDirect => return Ok((problem.gains(values), Vec::new())),
        ProblemMode::TrajectoryMatch => LateralParams::from_vehicle(&problem.vehicle(values)),
        ProblemMode::LaneKeeping => problem.lateral(values),
    };
    let model = build_lateral_model(&lateral, problem.v_x)?;
    let k = place_poles(&model, &problem.poles)?;
    let eigs = closed_loop_eigs(&model, &k).iter().map(|c| [c.re, c.im]).collect();
    Ok((k, eigs))
}

/// Run the lane keeper on the true plant around the configured circle and
/// write `errors.csv`, `trajectory.csv` and `summary.json`.
pub fn evaluate(cfg: &ResolvedConfig, source: &GainSource) -> Result<Evaluation, CliError> {
    let out = cfg.out_dir()?;
    let eval = match source {
        GainSource::True => evaluate_controller(
            &cfg.vehicle,
            &cfg.vehicle,
            &cfg.problem.poles,
            &cfg.reference,
            &cfg.rollout,
            cfg.problem.v_x,
            &cfg.scoring.filter,
        )?,
        GainSource::Identified(path) => {
            let (k, eigs) = identified_gains(path)?;
            evaluate_gains(&k, &eigs, &cfg.vehicle, &cfg.reference, &cfg.rollout, cfg.problem.v_x, &cfg.scoring.filter)?
        }
        GainSource::File(path) => {
            let k = match read_json::<GainsInput>(path)? {
                GainsInput::Bare(k) | GainsInput::Wrapped { gains: k } => k,
            };
            evaluate_gains(&k, &[], &cfg.vehicle, &cfg.reference, &cfg.rollout, cfg.problem.v_x, &cfg.scoring.filter)?
        }
    };
    write_atomic(&out.join("errors.csv"), &errors_csv(&eval.profile, eval.dt)?)?;
    write_atomic(&out.join("trajectory.csv"), &trajectory_csv(&eval.states, eval.dt)?)?;
    let source_name = match source {
        GainSource::True => "true".to_string(),
        GainSource::Identified(p) => format!("identified:{}", p.display()),
        GainSource::File(p) => format!("file:{}", p.display()),
    };
    write_json(
        &out.join("summary.json"),
        &EvaluationSummary {
            source: source_name,
            gains: eval.gains,
            eigenvalues: &eval.eigenvalues,
            circle: eval.circle,
            v_x: eval.v_x,
            steady_state: eval.steady_state,
            config: cfg,
        },
    )?;
    println!(
        "K = [{}]; steady state |e1| = {:.4} m, |e2| = {:.4} rad",
        eval.gains.0.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", "),
        eval.steady_state.e1,
        eval.steady_state.e2
    );
    Ok(eval)
}
