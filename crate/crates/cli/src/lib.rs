//! Command-line front end: configuration, dispatch and artifact output.

pub mod commands;
pub mod config;
pub mod study;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "orthlap", version, about = "Orthogonal Laplacian laboratory")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for artifacts; created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Caps the number of worker threads.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Overrides `[mc] seed` and `[solver] eig_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Helicity-based integrability report.
    Classify,
    /// Boundary tangency `max |n·ŵ|` per face set.
    Tangency,
    /// Poincaré constants for the configured a⊥, optionally checked against
    /// the spectrum.
    Poincare {
        #[arg(long)]
        no_verify: bool,
    },
    /// Orthogonal Poisson solve `Δ⊥u = φ`.
    Solve(SolveArgs),
    /// Smallest eigenvalues and nullspace dimension of `−Δ⊥`.
    Spectrum {
        #[arg(short)]
        k: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Time evolution of the Fokker–Planck equation.
    Evolve(TimeArgs),
    /// Particle ensemble for the constrained SDE.
    Mc(TimeArgs),
    /// Manufactured-solution convergence study.
    Convergence(SolveArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TimeArgs {
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long = "T")]
    pub t_final: Option<f64>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Tangency => "tangency",
            Command::Poincare { .. } => "poincare",
            Command::Solve(_) => "solve",
            Command::Spectrum { .. } => "spectrum",
            Command::Evolve(_) => "evolve",
            Command::Mc(_) => "mc",
            Command::Convergence(_) => "convergence",
        }
    }
}

/// Folds the command-line overrides into the configuration.
pub fn resolve(cli: &Cli, mut cfg: RunConfig) -> Result<RunConfig, CliError> {
    if let Some(s) = cli.seed {
        cfg.mc.seed = s;
        cfg.solver.eig_seed = s;
    }
    match &cli.command {
        Command::Poincare { no_verify: true } => cfg.poincare.verify = false,
        Command::Solve(a) | Command::Convergence(a) => {
            if let Some(t) = a.tol {
                cfg.solver.tol = t;
            }
        }
        Command::Spectrum { k, tol } => {
            if let Some(k) = k {
                cfg.solver.k = *k;
            }
            if let Some(t) = tol {
                cfg.solver.eig_tol = *t;
            }
        }
        Command::Evolve(a) => {
            if a.dt.is_some() {
                cfg.evolve.dt = a.dt;
            }
            if let Some(t) = a.t_final {
                cfg.evolve.t_final = t;
            }
        }
        Command::Mc(a) => {
            if let Some(dt) = a.dt {
                cfg.mc.dt = dt;
            }
            if let Some(t) = a.t_final {
                cfg.mc.t_final = t;
            }
        }
        _ => {}
    }
    Ok(cfg)
}

/// Runs one command and returns the process exit status.
pub fn run(cli: Cli) -> i32 {
    let result = (|| {
        let path = cli
            .config
            .as_ref()
            .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
        let cfg = resolve(&cli, RunConfig::load(path)?)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers.unwrap_or(0))
            .build()
            .map_err(|e| CliError::Config(format!("--workers: {e}")))?;
        pool.install(|| commands::dispatch(&cli.command, &cfg, &cli.out))
    })();
    match result {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("orthlap {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
