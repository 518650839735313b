//! Command-line surface of diffsteer: configuration, file formats and the
//! `generate`, `identify`, `gains` and `evaluate` commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use diffsteer::sysid::OptimizerKind;

pub use commands::{GainSource, Outcome};
pub use config::{ExperimentConfig, Overrides, ResolvedConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "diffsteer", version, about = "Differentiable vehicle identification and lane keeping")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Cmaes,
}

impl From<OptimizerArg> for OptimizerKind {
    fn from(o: OptimizerArg) -> Self {
        match o {
            OptimizerArg::Adam => OptimizerKind::Adam,
            OptimizerArg::Cmaes => OptimizerKind::Cmaes,
        }
    }
}

/// Flags shared by every command.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GainsFrom {
    True,
    Identified,
    File,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a ground-truth dataset.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of trajectories.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Fit decision variables to a dataset.
    Identify {
        #[command(flatten)]
        common: CommonArgs,
        /// `dataset.json` written by `generate`; generated on the fly if absent.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Number of consecutive seeds to run.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Place the configured poles and print the gain vector.
    Gains {
        #[command(flatten)]
        common: CommonArgs,
        /// Compare gain derivatives with central differences.
        #[arg(long)]
        check_grad: bool,
    },
    /// Run the lane keeper on the true vehicle and record error profiles.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value = "true")]
        gains_from: GainsFrom,
        /// Run report (`report.json`) for `--gains-from identified`.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Gain JSON for `--gains-from file`.
        #[arg(long)]
        gains_file: Option<PathBuf>,
    },
}

fn resolve(common: &CommonArgs, extra: Overrides) -> Result<ResolvedConfig, CliError> {
    let file = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let flags = Overrides {
        seed: common.seed,
        epochs: common.epochs,
        batch: common.batch,
        optimizer: common.optimizer.map(Into::into),
        out: common.out.clone(),
        ..extra
    };
    file.resolve(&flags)
}

/// Execute one parsed command.
pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Generate { common, count } => {
            let cfg = resolve(&common, Overrides { count, ..Default::default() })?;
            commands::generate(&cfg)
        }
        Command::Identify { common, dataset, seeds } => {
            let cfg = resolve(
                &common,
                Overrides {
                    dataset,
                    seeds,
                    ..Default::default()
                },
            )?;
            commands::identify(&cfg).map(|(outcome, _)| outcome)
        }
        Command::Gains { common, check_grad } => {
            let cfg = resolve(&common, Overrides::default())?;
            commands::gains(&cfg, check_grad).map(|_| Outcome::Success)
        }
        Command::Evaluate {
            common,
            gains_from,
            report,
            gains_file,
        } => {
            let cfg = resolve(&common, Overrides::default())?;
            let missing = |flag: &str| CliError::Config(format!("--gains-from needs {flag}"));
            let source = match gains_from {
                GainsFrom::True => GainSource::True,
                GainsFrom::Identified => GainSource::Identified(report.ok_or_else(|| missing("--report"))?),
                GainsFrom::File => GainSource::File(gains_file.ok_or_else(|| missing("--gains-file"))?),
            };
            commands::evaluate(&cfg, &source).map(|_| Outcome::Success)
        }
    }
}
