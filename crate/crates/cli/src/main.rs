//! `matchsim`: scenario-driven simulation, verification and reproduction
//! runs for repeated assessment-matching markets.
//!
//! Exit codes: 0 pass, 1 verdict failure, 2 configuration error, 3 runtime
//! error.

mod config;
mod emit;
mod reproduce;
mod simulate;
mod sweep;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Check, ConfigError};

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("verdict failed: {0}")]
    Verdict(String),
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("assumption not satisfied: {0}")]
    Assumption(String),
    #[error("{0:#}")]
    Runtime(#[from] anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Verdict(_) => 1,
            Failure::Config(_) | Failure::Assumption(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "matchsim", version, about = "Repeated assessment-matching market simulator")]
struct Cli {
    /// Worker threads for batch runs (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its trace, report and summary.
    Simulate {
        config: PathBuf,
        /// `key=value` overrides of scenario fields (dotted keys).
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario against one property.
    Verify {
        #[arg(value_enum)]
        check: Check,
        config: PathBuf,
        overrides: Vec<String>,
        /// Run even when the check's assumptions fail.
        #[arg(long)]
        waive_assumptions: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rerun a canned experiment with baked-in parameters.
    Reproduce {
        #[arg(value_enum)]
        target: reproduce::Target,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Instances per configuration (fig2, theta-bound).
        #[arg(long)]
        instances: Option<usize>,
        /// Replications per horizon (regret-scaling).
        #[arg(long)]
        runs: Option<usize>,
        /// Payment objective for fig2.
        #[arg(long, value_enum, default_value = "revenue")]
        objective: reproduce::ObjectiveArg,
        /// Also write SVG charts of the plot data.
        #[arg(long)]
        svg: bool,
    },
    /// Write the scenario's instances in text and JSON form.
    GenerateInstance {
        config: PathBuf,
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the payment parameter given in the scenario's `[sweep]` table.
    Sweep {
        config: PathBuf,
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: bool,
    },
}

fn load(path: &std::path::Path, overrides: &[String], out: Option<PathBuf>) -> Result<config::Loaded, Failure> {
    let env = std::env::var(config::SEED_ENV).ok();
    let mut loaded = config::load(path, overrides, env.as_deref())?;
    if let Some(o) = out {
        loaded.config.output_dir = o;
    }
    Ok(loaded)
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .map_err(anyhow::Error::from)?;
    }
    match cli.command {
        Command::Simulate { config, overrides, out } => simulate::run(&load(&config, &overrides, out)?),
        Command::Verify {
            check,
            config,
            overrides,
            waive_assumptions,
            out,
        } => verify::run(&load(&config, &overrides, out)?, check, waive_assumptions),
        Command::Reproduce {
            target,
            out,
            instances,
            runs,
            objective,
            svg,
        } => reproduce::run(
            target,
            &reproduce::Options {
                out,
                instances,
                runs,
                objective,
                svg,
            },
        ),
        Command::GenerateInstance { config, overrides, out } => {
            simulate::generate_instances(&load(&config, &overrides, out)?)
        }
        Command::Sweep {
            config,
            overrides,
            out,
            svg,
        } => sweep::run(&load(&config, &overrides, out)?, svg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
