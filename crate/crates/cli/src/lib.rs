//! `rfid-aoa` command-line pipeline: simulate, estimate, track, featurize,
//! classify, eval, and `demo` chaining them all.

pub mod artifacts;
pub mod config;
pub mod stages;

use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::path::PathBuf;

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0:#}")]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rfid-aoa", version, about = "Two-element RFID AoA tracking and gesture classification pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration. Later stages default to `<out>/config.json`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dotted override, e.g. `--set scene.snr_db=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize the labeled gesture set: reader logs, IQ blobs, truth.
    Simulate(Common),
    /// Window the logs and run MUSIC per window.
    Estimate(Common),
    /// Kalman filter and RTS smoother over the per-window estimates.
    Track(Common),
    /// Feature tables for every configured feature set.
    Featurize(Common),
    /// k-NN and DTW predictions on a stratified split.
    Classify(Common),
    /// Metrics and confusion matrices for the predictions.
    Eval(Common),
    /// Every stage in order, then a side-by-side report.
    Demo(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate(c)
            | Command::Estimate(c)
            | Command::Track(c)
            | Command::Featurize(c)
            | Command::Classify(c)
            | Command::Eval(c)
            | Command::Demo(c) => c,
        }
    }

    fn starts_fresh(&self) -> bool {
        matches!(self, Command::Simulate(_) | Command::Demo(_))
    }
}

/// Resolve config and output directory for a subcommand.
pub fn resolve(cmd: &Command) -> Result<stages::Ctx, CliError> {
    let c = cmd.common();
    let mut overrides = c.overrides.clone();
    if let Some(s) = c.seed {
        overrides.push(format!("seed={s}"));
    }
    let early_out = c.out.clone();
    let mut config_path = c.config.clone();
    if config_path.is_none() && !cmd.starts_fresh() {
        let saved = early_out.clone().unwrap_or_else(|| PathBuf::from("out")).join("config.json");
        if saved.exists() {
            config_path = Some(saved);
        }
    }
    let cfg = RunConfig::load(config_path.as_deref(), &overrides)?;
    let out = early_out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    Ok(stages::Ctx::new(cfg, out))
}

pub fn execute(cmd: &Command) -> Result<(), CliError> {
    let ctx = resolve(cmd)?;
    match cmd {
        Command::Simulate(_) => stages::simulate(&ctx)?,
        Command::Estimate(_) => stages::estimate(&ctx)?,
        Command::Track(_) => stages::track(&ctx)?,
        Command::Featurize(_) => stages::featurize(&ctx)?,
        Command::Classify(_) => stages::classify(&ctx)?,
        Command::Eval(_) => {
            for line in stages::eval(&ctx)? {
                println!("{line}");
            }
        }
        Command::Demo(_) => {
            for line in stages::demo(&ctx)? {
                println!("{line}");
            }
        }
    }
    artifacts::write_manifest(&ctx.out, &ctx.hash, ctx.cfg.seed)?;
    Ok(())
}

/// Parse and run; returns the process exit code.
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
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
