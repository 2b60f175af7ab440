//! `simplex-langevin`: run, validate and inspect Wasserstein Langevin dynamics
//! on the probability simplex of a weighted graph.
//!
//! Exit codes: 0 success, 2 configuration or construction error,
//! 3 simulation or validation failure, 4 I/O error.

mod config;
mod error;
mod output;
mod plot;
mod qmatrix;
mod simulate;
mod twopoint;
mod validate;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "simplex-langevin", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (JSON), or a preset name: example5, example6.
    #[arg(long, global = true)]
    config: Option<String>,

    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Upper bound on parallel ensemble members.
    #[arg(long = "max-workers", global = true, env = "SIMPLEX_LANGEVIN_WORKERS", hide_env_values = true)]
    max_workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured SDE and write trajectories plus a JSON summary.
    Simulate,
    /// Check structural invariants; exits 3 if any fails.
    Validate,
    /// Print the Q-matrix, optionally with one sampled Wasserstein Q-matrix.
    Qmatrix {
        /// Comma-separated state, e.g. 0.3,0.7 (defaults to the config's p0).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        p: Option<Vec<f64>>,
        #[arg(long)]
        realize: bool,
    },
    /// Two-point model: trajectory, stationary density, histogram and L1 distance.
    Twopoint,
    /// Merge trajectory and density CSVs into one tidy CSV.
    PlotData {
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        density: Option<PathBuf>,
        /// Output file name under --out.
        #[arg(long, default_value = "plot_data.csv")]
        output: PathBuf,
    },
}

fn load(cli: &Cli) -> CliResult<ExperimentConfig> {
    let source = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config <path or preset> is required".into()))?;
    let mut cfg = ExperimentConfig::load(source)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate => {
            let cfg = load(cli)?;
            simulate::run(&cfg, &cli.out, output::worker_count(cfg.workers, cli.max_workers)?)
        }
        Command::Validate => validate::run(&load(cli)?, &cli.out),
        Command::Qmatrix { p, realize } => {
            println!("{}", qmatrix::run(&load(cli)?, p.clone(), *realize)?);
            Ok(())
        }
        Command::Twopoint => {
            let cfg = load(cli)?;
            twopoint::run(&cfg, &cli.out, output::worker_count(cfg.workers, cli.max_workers)?)
        }
        Command::PlotData {
            trajectory,
            density,
            output,
        } => plot::run(trajectory.as_deref(), density.as_deref(), &output::resolve(&cli.out, output)),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(&cli) {
        eprintln!("simplex-langevin: {e}");
        std::process::exit(e.exit_code());
    }
}
