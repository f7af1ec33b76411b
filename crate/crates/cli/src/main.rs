//! `knf` command-line driver.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use knf::KnfError;

use crate::commands::Run;
use crate::config::{ConfigError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "knf", version, about = "Koopman neural forecaster")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, PartialEq, Eq)]
enum Command {
    /// Write synthetic series and manifests.
    Synth(Flags),
    /// Train a model and write a checkpoint plus loss history.
    Train(Flags),
    /// Write per-series forecast CSVs.
    Forecast(Flags),
    /// Score forecasts against held-out steps.
    Eval(Flags),
    /// Eigendecomposition of a trained operator and eigenfunction traces.
    Spectral(Flags),
}

#[derive(clap::Args, Debug, Clone, PartialEq, Eq)]
struct Flags {
    /// Run configuration (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for per-series forecasting and evaluation.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// `key=value`, applied after the file; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Command {
    fn flags(&self) -> &Flags {
        match self {
            Command::Synth(f) | Command::Train(f) | Command::Forecast(f) | Command::Eval(f) | Command::Spectral(f) => f,
        }
    }
}

/// Exit code for a failed run: 3 for numeric failures, 2 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<KnfError>() {
            return if e.is_numeric() { 3 } else { 2 };
        }
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
    }
    2
}

fn setup(flags: &Flags) -> anyhow::Result<Run> {
    let mut cfg = RunConfig::load(&flags.config)?;
    for kv in &flags.overrides {
        cfg.apply_override(kv)?;
    }
    if let Some(seed) = flags.seed {
        cfg.train.seed = seed;
    }
    if let Some(out) = std::env::var_os("KNF_OUT") {
        cfg.output_dir = PathBuf::from(out);
    }
    if flags.jobs == 0 {
        return Err(ConfigError("--jobs must be at least 1".into()).into());
    }
    Ok(Run { cfg, jobs: flags.jobs })
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let ctx = setup(cli.command.flags())?;
    match cli.command {
        Command::Synth(_) => commands::synth(&ctx),
        Command::Train(_) => commands::train(&ctx),
        Command::Forecast(_) => commands::forecast(&ctx),
        Command::Eval(_) => commands::eval(&ctx),
        Command::Spectral(_) => commands::spectral(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::from(exit_code(&e))
        }
    }
}
