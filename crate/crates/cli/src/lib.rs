//! `flapctl`: configuration loading and pipeline dispatch.
//!
//! Exit codes: 0 success, 1 pipeline fault, 2 parse error / missing file /
//! bad usage, 3 configuration violates an invariant.

pub mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{load_config, Command, RunConfig};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "FLAPCTL_OUT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{origin}:{line}:{col}: TOML parse error: {msg}")]
    Parse {
        origin: String,
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("input file not found: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Setup(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Pipeline(#[from] flapping_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Pipeline(_) => 1,
            CliError::Parse { .. } | CliError::MissingInput(_) | CliError::Usage(_) | CliError::Setup(_) => 2,
            CliError::Invalid(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "flapctl", version, about = "Flapping-wing rhythm, control and analysis pipelines")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set star.a=0.2` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Seed for every noise source.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for sim-sweep.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Sub {
    /// Integrate the phase oscillator at constant asymmetry.
    StarGen,
    /// Run the servo-rate dual-wing pattern generator.
    CpgGen,
    /// Simulate one flight scenario.
    SimRun,
    /// Step-response scenarios across allocation modes, in parallel.
    SimSweep,
    /// Fit a periodic cubic B-spline to a wing contour.
    FitContour,
    /// Wing morphometrics and reduced frequency.
    Metrics,
    /// Phase-locked force/torque analysis of bench logs.
    BenchAnalyze,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::StarGen => Command::StarGen,
            Sub::CpgGen => Command::CpgGen,
            Sub::SimRun => Command::SimRun,
            Sub::SimSweep => Command::SimSweep,
            Sub::FitContour => Command::FitContour,
            Sub::Metrics => Command::Metrics,
            Sub::BenchAnalyze => Command::BenchAnalyze,
        }
    }
}

/// Parses `args`, runs the pipeline and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let cmd = Command::from(cli.command);
    let mut overrides = cli.set.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(jobs) = cli.jobs {
        overrides.push(format!("sweep.jobs={jobs}"));
    }
    let cfg = load_config(cli.config.as_deref(), &overrides, cmd)?;
    let out = output_dir(cli.out.as_deref(), &cfg, cmd);
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::Setup(format!("cannot create output directory {}: {e}", out.display())))?;
    commands::dispatch(cmd, &cfg, &out)
}

/// `--out`, then `out` in the config, then `$FLAPCTL_OUT/<command>`, then
/// `flapctl-out/<command>`.
pub fn output_dir(flag: Option<&std::path::Path>, cfg: &RunConfig, cmd: Command) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = &cfg.out {
        return p.clone();
    }
    match std::env::var_os(OUT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(cmd.name()),
        _ => PathBuf::from("flapctl-out").join(cmd.name()),
    }
}
