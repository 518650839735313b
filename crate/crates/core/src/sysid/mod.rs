//! Ground-truth generation, parameter identification, gain derivation and
//! closed-loop evaluation.

mod dataset;
mod evaluate;
mod objective;
mod problem;
mod train;

pub use dataset::{generate_ground_truth, Dataset, DatasetEntry, GenerateSpec, Split};
pub use evaluate::{derive_gains, evaluate_controller, evaluate_gains, Evaluation, SteadyState};
pub use objective::{entry_loss, entry_loss_and_grad, EntryObjective, Scoring};
pub use problem::{DecisionVar, IdentificationProblem, ProblemMode, VarGroup};
pub use train::{
    average_curves, identify, identify_seeds, initial_values, mean_loss, CmaesSettings,
    CurvePoint, EarlyStopSettings, EpochRecord, OptimizerKind, RunReport, StopReason,
    TrainSettings,
};

use thiserror::Error;

use crate::control::ControlError;
use crate::dynamics::DynamicsError;
use crate::losses::LossError;
use crate::optim::OptimError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SysidError {
    #[error("invalid problem: {0}")]
    Problem(String),
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("ground-truth rollout diverged (entry seed {seed})")]
    GenerationDiverged { seed: u64 },
    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("closed loop diverged at step {step} with K = {gains:?}, eigenvalues {eigenvalues:?}")]
    EvaluationDiverged {
        gains: [f64; 4],
        eigenvalues: Vec<[f64; 2]>,
        step: usize,
    },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}
