mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{ExperimentConfig, PlantSource, PresetName};
use crate::error::CliError;

/// Extremum-seeking LQR experiments.
#[derive(Debug, Parser)]
#[command(name = "eslqr", version, about)]
struct Cli {
    /// JSON experiment configuration; the scalar preset when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for every random plant or cost source.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the fully resolved configuration and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Solve the Riccati equation for the optimal gain.
    Dare,
    /// Run the extremum-seeking loop, writing a CSV log and a JSON summary.
    RunEsc,
    /// `run-esc` on the induction-motor preset.
    RunDfim,
    /// Verify the dither orthonormality sums.
    CheckDither,
    /// Run the truncation, gradient-estimate and averaging checks.
    AvgCheck,
    /// Closed-loop rollouts from each canonical initial state.
    Rollout,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if matches!(cli.command, Command::RunDfim) {
        cfg.plant = PlantSource::Preset(PresetName::Dfim);
    }
    let mut cfg = cfg.completed();
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = load(cli)?;
    if cli.dump_config {
        let text =
            serde_json::to_string_pretty(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
        println!("{text}");
        return Ok(());
    }
    let out = cfg.output.dir.clone();
    match cli.command {
        Command::Dare => commands::dare(&cfg, &out),
        Command::RunEsc | Command::RunDfim => commands::run_esc(&cfg, &out),
        Command::CheckDither => commands::check_dither(&cfg, &out),
        Command::AvgCheck => commands::avg_check(&cfg, &out),
        Command::Rollout => commands::rollout(&cfg, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ESLQR_LOG_LEVEL", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("eslqr: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
