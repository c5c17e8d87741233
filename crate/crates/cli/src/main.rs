//! `subrad`: configuration-driven experiments on collective emission of
//! multilevel atom ensembles.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use subrad_core::hilbert::LindbladConvention;
use thiserror::Error;

use config::RunConfig;
use output::Format;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric diagnostic failed: {0}")]
    Numeric(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    /// Core errors raised while building inputs are configuration problems,
    /// except for the two with dedicated exit codes.
    pub fn from_input(e: subrad_core::Error) -> Self {
        match e {
            subrad_core::Error::Capacity { .. } => CliError::Capacity(e.to_string()),
            subrad_core::Error::StepSize { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Capacity(_) => 4,
        }
    }
}

impl From<subrad_core::Error> for CliError {
    fn from(e: subrad_core::Error) -> Self {
        CliError::from_input(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "subrad", version, about = "Collective decay and phase-controlled preparation of multilevel atom ensembles")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Overrides `physics.convention`.
    #[arg(long, global = true)]
    convention: Option<LindbladConvention>,
    /// Worker threads for parallel scans (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Pair couplings Ω and Γ versus distance.
    Couplings,
    /// Eigenstates of every manifold and the feeding rates between them.
    Cascade,
    /// Lowest (N−1)-manifold decay rate versus distance for standard geometries.
    LowestRates,
    /// Time evolution: free decay, dissipative preparation, or pulsed drive.
    Evolve,
    /// Preparation probability at one phase point.
    Prepare,
    /// Preparation probability on a phase grid.
    Sweep,
    /// Phase optimization: grid search plus simplex refinement.
    Optimize,
    /// Parses and validates the configuration without running anything.
    ValidateConfig,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Couplings => "couplings",
            Command::Cascade => "cascade",
            Command::LowestRates => "lowest-rates",
            Command::Evolve => "evolve",
            Command::Prepare => "prepare",
            Command::Sweep => "sweep",
            Command::Optimize => "optimize",
            Command::ValidateConfig => "validate-config",
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut config = RunConfig::load(path)?;
    if let Some(c) = cli.convention {
        config.physics.convention = c;
    }
    config.validate()?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Io(format!("cannot start thread pool: {e}")))?;
    }
    if let Command::ValidateConfig = cli.command {
        println!("configuration ok, sha256 {}", config.hash());
        return Ok(());
    }
    let outputs = commands::run(cli.command, &config, cli.format)?;
    for path in outputs.write(&cli.out)? {
        println!("{path}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
