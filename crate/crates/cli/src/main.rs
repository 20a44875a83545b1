//! `rotgas`: command-line driver for the channel, DM, 3D GP, stability,
//! phase-scan and many-body toy solvers.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rotgas::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use config::{load_config, Validate};

#[derive(Parser)]
#[command(name = "rotgas", version, about = "Rotating Bose gas ground-state solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Channel energies E_n(g) and orbitals.
    Channel(Common),
    /// Density-matrix minimization with a certified duality gap.
    Dm(Common),
    /// Multi-start 3D GP minimization with vortex detection.
    Gp3d(Common),
    /// Vortex-instability quadratic forms for channel states.
    Stability(Common),
    /// (Ω, g) sweep of DM and GP energies.
    Phase(Common),
    /// Truncated many-body model: bosonic vs unrestricted ground states.
    Toy(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Config override `key.path=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Serialize)]
struct ErrorReport {
    kind: &'static str,
    message: String,
    exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual: Option<f64>,
}

fn classify(e: &Error) -> ErrorReport {
    let (kind, exit_code) = match e {
        Error::Config(_) | Error::Domain(_) | Error::Shape(_) | Error::Json(_) => ("config", 2),
        Error::NotConverged { .. } => ("convergence", 3),
        Error::Io(_) => ("io", 4),
    };
    let (iterations, residual) = match e {
        Error::NotConverged { iterations, residual, .. } => (Some(*iterations), Some(*residual)),
        _ => (None, None),
    };
    ErrorReport { kind, message: e.to_string(), exit_code, iterations, residual }
}

fn prepare<T: DeserializeOwned + Validate>(c: &Common) -> Result<T> {
    let mut cfg: T = load_config(c.config.as_deref(), &c.set)?;
    if let Some(s) = c.seed {
        *cfg.seed_mut() = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_with<T: DeserializeOwned + Validate>(c: &Common, f: fn(&T, &Path) -> Result<()>) -> Result<()> {
    let cfg = prepare::<T>(c)?;
    std::fs::create_dir_all(&c.out)?;
    f(&cfg, &c.out)
}

fn run(cli: &Cli) -> Result<()> {
    let c = match &cli.command {
        Command::Channel(c)
        | Command::Dm(c)
        | Command::Gp3d(c)
        | Command::Stability(c)
        | Command::Phase(c)
        | Command::Toy(c) => c,
    };
    if let Some(k) = c.threads {
        if k == 0 {
            return Err(Error::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Channel(c) => run_with(c, commands::channel),
        Command::Dm(c) => run_with(c, commands::dm),
        Command::Gp3d(c) => run_with(c, commands::gp3d),
        Command::Stability(c) => run_with(c, commands::stability),
        Command::Phase(c) => run_with(c, commands::phase),
        Command::Toy(c) => run_with(c, commands::toy),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = classify(&e);
            let text = serde_json::to_string(&report).unwrap_or_else(|_| format!("{{\"message\":{:?}}}", report.message));
            eprintln!("{text}");
            ExitCode::from(report.exit_code)
        }
    }
}
