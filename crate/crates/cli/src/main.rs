mod analyze;
mod config;
mod experiment;
mod geometry;
mod optimize;
mod output;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Profile};
use output::OutDir;

/// Parareal with single-step and two-step coarse propagators.
#[derive(Debug, Parser)]
#[command(name = "parareal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for CSV and JSON artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Overrides the seed of the configuration (random init and optimizer).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for fine sweeps and grid evaluations.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[arg(long, global = true, value_enum, default_value = "paper")]
    profile: Profile,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Convergence factors of coarse propagators.
    Analyze,
    /// Optimize the two-step coarse propagator.
    Optimize,
    /// Linear heat equation experiment.
    Linear,
    /// Semilinear experiment.
    Nonlinear,
    /// Boundary locus and A-stability verdicts.
    Stability,
    /// Factor maps over the complex plane.
    Contour,
    /// Approach of gamma_c to gamma_e as J grows.
    Jorder,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Optimize => "optimize",
            Command::Linear => "linear",
            Command::Nonlinear => "nonlinear",
            Command::Stability => "stability",
            Command::Contour => "contour",
            Command::Jorder => "jorder",
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();

    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring the thread pool")?;
    }

    let (mut cfg, base) = ExperimentConfig::load(cli.config.as_deref())?;
    cfg.check_kind(cli.command.name())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.optimizer.seed = seed;
    }
    let out = OutDir::create(&cli.out)?;
    out.write_json("config.json", &cfg)?;

    match cli.command {
        Command::Analyze => {
            analyze::run(&cfg, &base, &out)?;
        }
        Command::Optimize => {
            optimize::run(&cfg.optimizer, &out)?;
        }
        Command::Linear => {
            experiment::linear(&cfg, cli.profile, &out)?;
        }
        Command::Nonlinear => {
            experiment::nonlinear(&cfg, cli.profile, &out)?;
        }
        Command::Stability => {
            geometry::stability(&cfg, &base, &out)?;
        }
        Command::Contour => {
            geometry::contour(&cfg, &base, &out)?;
        }
        Command::Jorder => {
            geometry::jorder(&cfg, &out)?;
        }
    }
    Ok(())
}
