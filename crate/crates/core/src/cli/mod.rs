//! Command-line front end.

pub mod commands;
pub mod config;
pub mod render;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::bayes::BayesError;
use crate::bounds::BoundsError;
use crate::model::ModelError;
use crate::sim::SimError;
use commands::{OutputFormat, RenderOptions};
use config::{ConfigError, Scenario};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("this command needs a --config file")]
    NoConfig,
    #[error("config has no `{0}` section")]
    MissingSection(&'static str),
    #[error("no population group named {0:?}")]
    UnknownGroup(String),
    #[error("grid point {0} must lie strictly inside (0, 1)")]
    BadGridPoint(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Bayes(#[from] BayesError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Parser)]
#[command(
    name = "incentive-fdr",
    version,
    about = "Incentive-aware p-value thresholds: bounds, exact FDR, and simulation"
)]
pub struct Args {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides `simulation.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Print unrounded values.
    #[arg(long, global = true)]
    pub precise: bool,

    #[arg(long, global = true, value_enum)]
    pub output: Option<OutputFormat>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Posterior-odds and Bayes FDR bounds for the configured protocol.
    Bound,
    /// Threshold that caps the Bayes FDR at `alpha`.
    Design {
        #[arg(long)]
        alpha: f64,
    },
    /// Standard vs. modernized FDA protocols at C = $50M.
    FdaTable,
    /// Exact and simulated population FDR over a threshold grid (CSV).
    Sweep,
    /// Simulate the configured population once.
    Simulate,
    /// Local fdr and cumulative Bayes FDR over a p-value grid (CSV).
    Lfdr {
        /// Comma-separated p-values; defaults to 0.01..0.99.
        #[arg(long, value_delimiter = ',')]
        x: Option<Vec<f64>>,
        /// Use this group's prior instead of the population mixture.
        #[arg(long)]
        group: Option<String>,
    },
}

fn load(args: &Args) -> Result<Scenario, CliError> {
    let path = args.config.as_ref().ok_or(CliError::NoConfig)?;
    Ok(Scenario::load(path)?)
}

/// Runs one command; returns the process exit code.
pub fn run(args: Args, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match dispatch(&args, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                CliError::Config(_) | CliError::NoConfig | CliError::MissingSection(_) => 2,
                _ => 1,
            }
        }
    }
}

fn dispatch(args: &Args, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let scenario = match (&args.command, &args.config) {
        (Command::FdaTable, None) => None,
        _ => Some(load(args)?),
    };
    let seed = args
        .seed
        .or_else(|| scenario.as_ref().and_then(|s| s.simulation).map(|s| s.seed))
        .unwrap_or(0);
    let default_format = match args.command {
        Command::Sweep | Command::Lfdr { .. } => OutputFormat::Csv,
        _ => OutputFormat::Table,
    };
    let opts = RenderOptions {
        format: args.output.unwrap_or(default_format),
        precise: args.precise,
        seed,
    };
    let scenario = scenario.as_ref();
    let need = || scenario.ok_or(CliError::NoConfig);
    match &args.command {
        Command::Bound => commands::cmd_bound(need()?, &opts, out, err).map(drop),
        Command::Design { alpha } => {
            commands::cmd_design(*alpha, need()?, &opts, out, err).map(drop)
        }
        Command::FdaTable => commands::cmd_fda_table(&opts, out, err).map(drop),
        Command::Sweep => commands::cmd_sweep(need()?, &opts, out, err).map(drop),
        Command::Simulate => commands::cmd_simulate(need()?, &opts, out, err).map(drop),
        Command::Lfdr { x, group } => {
            let grid = x.clone().unwrap_or_else(commands::default_x_grid);
            commands::cmd_lfdr(need()?, &grid, group.as_deref(), &opts, out, err).map(drop)
        }
    }
}
