//! The `aht` command line: train, eval, sweep, replay and plot-data.
//!
//! Exit codes: 0 success, 1 partial failure (a sweep point or a numerical
//! fault), 2 invalid input, 3 checkpoint does not fit the configuration.

mod commands;
mod config;
mod replay;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{build_policy, train, train_to_dir, TrainOutcome};
pub use config::{parse_override, Mode, RunConfig, RunSettings};
pub use replay::{replay, ReplaySummary, REPLAY_TOLERANCE};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::WidthMismatch { .. } | Error::Checkpoint { .. } => EXIT_MISMATCH,
        Error::Numerical { .. } => EXIT_PARTIAL,
        Error::Config { .. } | Error::Contract(_) | Error::Trace { .. } | Error::Io(_) | Error::Csv(_) => {
            EXIT_INVALID
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "aht", version, about = "Multi-agent active hypothesis testing with PPO")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every command that reads a run configuration.
#[derive(Debug, Args, Clone, Default)]
pub struct ConfigArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set env.sampling_cost=0.02`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl ConfigArgs {
    /// Load the configuration with dedicated flags applied as overrides.
    pub fn load(&self) -> crate::Result<RunConfig> {
        let mut sets = self.overrides.clone();
        if let Some(s) = self.seed {
            sets.push(format!("run.seed={s}"));
        }
        if let Some(w) = self.workers {
            sets.push(format!("run.workers={w}"));
        }
        if let Some(m) = &self.mode {
            sets.push(format!("run.mode=\"{m}\""));
        }
        if let Some(d) = &self.out_dir {
            sets.push(format!("run.out_dir={}", toml::Value::String(d.display().to_string())));
        }
        RunConfig::load(self.config.as_deref(), &sets)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a shared actor and centralised critic; writes stats.csv,
    /// checkpoints and run_metadata.toml under the output directory.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate a checkpoint (or the heuristic) and print one metrics row.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Also write the episode trace CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Train and evaluate one policy per operating point; writes curve.csv.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// TOML sweep specification.
        #[arg(long)]
        sweep: PathBuf,
    },
    /// Split a trace into per-agent belief, action and observation tables,
    /// re-deriving every belief from the observations.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Configuration supplying the prior and observation model.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Per-figure tables from a curve CSV.
    PlotData {
        #[arg(long)]
        curve: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
