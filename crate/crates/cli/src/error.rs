use std::io;
use std::path::{Path, PathBuf};

use diffsteer::control::ControlError;
use diffsteer::dynamics::DynamicsError;
use diffsteer::grad::GradError;
use diffsteer::optim::OptimError;
use diffsteer::sysid::SysidError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    /// Reading a config, dataset, report or gain file failed.
    #[error("{}: {source}", path.display())]
    Input { path: PathBuf, source: io::Error },
    /// Writing an output failed.
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Sysid(#[from] SysidError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn input(path: &Path, source: io::Error) -> Self {
        CliError::Input {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for bad input, 3 for numerical divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input { .. } | CliError::Parse { .. } => 2,
            CliError::Io { .. } | CliError::Csv(_) => 1,
            CliError::Sysid(e) => sysid_code(e),
            CliError::Control(e) => control_code(e),
            CliError::Grad(_) => 3,
        }
    }
}

fn dynamics_code(e: &DynamicsError) -> i32 {
    match e {
        DynamicsError::NonFiniteState | DynamicsError::Diverged { .. } => 3,
        DynamicsError::InvalidParams(_) | DynamicsError::InvalidConfig(_) => 2,
    }
}

fn control_code(e: &ControlError) -> i32 {
    match e {
        ControlError::Diverged { .. } | ControlError::Uncontrollable { .. } => 3,
        ControlError::Dynamics(d) => dynamics_code(d),
        _ => 2,
    }
}

fn sysid_code(e: &SysidError) -> i32 {
    match e {
        SysidError::Problem(_) | SysidError::Dataset(_) | SysidError::Loss(_) => 2,
        SysidError::GenerationDiverged { .. }
        | SysidError::NonFiniteLoss { .. }
        | SysidError::EvaluationDiverged { .. } => 3,
        SysidError::Dynamics(d) => dynamics_code(d),
        SysidError::Control(c) => control_code(c),
        SysidError::Optim(OptimError::NonFiniteGradient { .. }) => 3,
        SysidError::Optim(_) => 2,
    }
}
