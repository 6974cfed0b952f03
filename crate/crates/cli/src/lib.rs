//! Experiment driver: TOML configs in, CSV tables with JSON sidecars out.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nqsmp::FloatFormat;

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod shared;

pub use config::{Experiment, ExperimentConfig, Overrides};
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "nqsmp", version, about = "Finite-precision sampling experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact bounds and observable biases against injected noise.
    Bounds(RunArgs),
    /// Acceptance rate against noise for several transverse fields.
    AcceptanceSweep(RunArgs),
    /// Log-density error distribution per float format.
    DeltaDist(RunArgs),
    /// Log-density error and sampled energies against system size.
    SizeScaling(RunArgs),
    /// SR training with reduced-precision sampling.
    VmcTrain(RunArgs),
    /// SR training with reduced-precision gradient ingredients.
    SrStability(RunArgs),
}

impl Command {
    pub fn experiment(&self) -> Experiment {
        match self {
            Command::Bounds(_) => Experiment::Bounds,
            Command::AcceptanceSweep(_) => Experiment::AcceptanceSweep,
            Command::DeltaDist(_) => Experiment::DeltaDist,
            Command::SizeScaling(_) => Experiment::SizeScaling,
            Command::VmcTrain(_) => Experiment::VmcTrain,
            Command::SrStability(_) => Experiment::SrStability,
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Bounds(a)
            | Command::AcceptanceSweep(a)
            | Command::DeltaDist(a)
            | Command::SizeScaling(a)
            | Command::VmcTrain(a)
            | Command::SrStability(a) => a,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML experiment file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub n_sites: Option<usize>,
    /// Transverse field of the TFIM.
    #[arg(long)]
    pub field: Option<f64>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// Training steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Comma-separated formats, e.g. `f32,bf16,e5m10`.
    #[arg(long, value_delimiter = ',')]
    pub formats: Option<Vec<FloatFormat>>,
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',')]
    pub sigma_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
}

impl RunArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            output_dir: self.output_dir.clone(),
            n_sites: self.n_sites,
            field: self.field,
            n_samples: self.n_samples,
            steps: self.steps,
            formats: self.formats.clone(),
            sigma_grid: self.sigma_grid.clone(),
            lambda: self.lambda,
            eta: self.eta,
        }
    }
}

/// Runs a validated configuration and returns the files written.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    match config.experiment {
        Experiment::Bounds => commands::bounds::run(config),
        Experiment::AcceptanceSweep => commands::acceptance::run(config),
        Experiment::DeltaDist => commands::delta::run(config),
        Experiment::SizeScaling => commands::scaling::run(config),
        Experiment::VmcTrain => commands::training::vmc_train(config),
        Experiment::SrStability => commands::training::sr_stability(config),
    }
}

pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let args = cli.command.args();
    let config = ExperimentConfig::resolve(args.config.as_deref(), cli.command.experiment(), &args.overrides())?;
    run_experiment(&config)
}
