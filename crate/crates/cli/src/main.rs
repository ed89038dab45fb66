//! `navsim`: train meta-skill policies, evaluate them, demo skill transfer
//! and certify the transfer closed form against its brute-force oracle.
//!
//! Exit codes: 0 success, 1 invalid input, 2 runtime failure, 3 oracle
//! failure.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use navsim::eval::EvalError;
use navsim::msl::MslError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{0}")]
    Oracle(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Oracle(_) => 3,
        }
    }
}

impl From<MslError> for CliError {
    fn from(e: MslError) -> Self {
        match e {
            MslError::Config(c) => CliError::Validation(format!("field `{}`: {}", c.field, c.message)),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidSweep(_) | EvalError::NoGoals(_) => CliError::Validation(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Protocol {
    /// Four goal points visited in turn.
    Goals,
    /// One episode per robot dimension through the transfer wrapper.
    Sweep,
    /// One episode with mid-run layout swaps.
    Dynamic,
}

impl Protocol {
    fn as_str(self) -> &'static str {
        match self {
            Protocol::Goals => "goals",
            Protocol::Sweep => "sweep",
            Protocol::Dynamic => "dynamic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ControllerKind {
    /// Trained policy loaded from --weights, deterministic actions.
    Policy,
    /// Scripted gap-seeking controller; needs no weights.
    Reactive,
}

#[derive(Parser)]
#[command(name = "navsim", version, about = "Map-less navigation trainer, evaluator and skill transfer tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one independent run per seed.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seed: Vec<u64>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Run an evaluation protocol and write CSV reports and an SVG plot.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, value_enum)]
        protocol: Protocol,
        #[arg(long, value_enum, default_value = "policy")]
        controller: ControllerKind,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Map a list of meta commands onto a scaled robot.
    Transfer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Compare the transfer closed form with the grid oracle on random instances.
    OracleCheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Oracle grid points per axis.
        #[arg(long, default_value_t = 2000)]
        grid_n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw trajectory logs (JSON, as written by `eval`) over a layout.
    Plot {
        /// Comma-separated trajectory JSON files.
        #[arg(long, value_delimiter = ',', required = true)]
        logs: Vec<PathBuf>,
        /// Layout name or file; defaults to the first log's layout.
        #[arg(long)]
        layout: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config, seed, out } => commands::cmd_train(config.as_deref(), &seed, &out),
        Command::Eval {
            config,
            weights,
            protocol,
            controller,
            out,
        } => commands::cmd_eval(config.as_deref(), weights.as_deref(), protocol, controller, &out),
        Command::Transfer { config, out } => commands::cmd_transfer(&config, &out),
        Command::OracleCheck {
            config,
            samples,
            seed,
            grid_n,
            out,
        } => commands::cmd_oracle_check(config.as_deref(), samples, seed, grid_n, out.as_deref()),
        Command::Plot { logs, layout, out } => commands::cmd_plot(&logs, layout.as_deref(), &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
