//! Command-line front end.

pub mod config;
pub mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use config::{load, validate, Command, ConfigError, Overrides};

pub const EXIT_INVALID: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CliCommand {
    Tau,
    Weight,
    Simulate,
    Bounds,
    Sweep,
    NoiseSynth,
    /// Check a config without running it.
    Validate,
}

impl CliCommand {
    fn as_run(self) -> Option<Command> {
        match self {
            CliCommand::Tau => Some(Command::Tau),
            CliCommand::Weight => Some(Command::Weight),
            CliCommand::Simulate => Some(Command::Simulate),
            CliCommand::Bounds => Some(Command::Bounds),
            CliCommand::Sweep => Some(Command::Sweep),
            CliCommand::NoiseSynth => Some(Command::NoiseSynth),
            CliCommand::Validate => None,
        }
    }
}

/// Label-noise simulation and bound checking.
#[derive(Debug, Parser)]
#[command(name = "noisylab", version)]
pub struct Cli {
    pub command: CliCommand,
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// CSV destination; defaults to the config path with a `.csv` extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for the simulation. Results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
}

pub fn main(cli: Cli) -> ExitCode {
    let (raw, echo) = match load(&cli.config) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_INVALID);
        }
    };
    let overrides = Overrides {
        command: cli.command.as_run(),
        seed: cli.seed,
        trials: cli.trials,
        output: cli.out.clone(),
        workers: cli.workers,
    };
    let cfg = match validate(&raw, &overrides) {
        Ok(c) => c,
        Err(v) => {
            println!("{}", ConfigError::Invalid(v));
            return ExitCode::from(EXIT_INVALID);
        }
    };
    if cli.command == CliCommand::Validate {
        println!("valid: {} config, seed {}", cfg.command.as_str(), cfg.seed);
        return ExitCode::SUCCESS;
    }
    let output = cfg.output.clone().unwrap_or_else(|| cli.config.with_extension("csv"));
    match run::run(&cfg, &output, &echo) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
