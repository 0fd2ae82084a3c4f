//! Command-line front end: TOML configs in, JSON records and CSV tables out.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod record_file;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use record_file::RecordFile;

use output::OutputDir;

#[derive(Debug, Parser)]
#[command(name = "qtraj", version, about = "Simulate and analyse monitored two-level atoms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Measurement record (JSON) for loglik, posterior and mcmc.
    #[arg(long, global = true)]
    pub record: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Parameter overrides, e.g. `Omega=1.3,Delta=1.43`.
    #[arg(long, global = true)]
    pub theta: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a measurement record from the true parameters.
    Simulate,
    /// Log-likelihood of a record.
    Loglik,
    /// Grid posterior, optionally as a function of observation time.
    Posterior,
    /// Metropolis-Hastings sampling of the posterior.
    Mcmc,
    /// Monte Carlo Fisher information.
    Fisher,
    /// Relative entropy to a Poisson process.
    Entropy,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Loglik => "loglik",
            Command::Posterior => "posterior",
            Command::Mcmc => "mcmc",
            Command::Fisher => "fisher",
            Command::Entropy => "entropy",
        }
    }
}

/// Loads the configuration, applies overrides and runs the subcommand.
pub fn run(cli: &Cli, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(spec) = &cli.theta {
        cfg.override_theta(spec)?;
    }
    let dir = OutputDir::create(&cli.out, cli.command.name(), &cfg.digest, cfg.seed)?;
    let record = cli.record.as_deref();
    qtraj_core::with_thread_pool(|| match cli.command {
        Command::Simulate => commands::simulate(&cfg, &dir, out),
        Command::Loglik => commands::loglik_cmd(&cfg, record, &dir, out),
        Command::Posterior => commands::posterior(&cfg, record, &dir, out),
        Command::Mcmc => commands::mcmc(&cfg, record, &dir, out),
        Command::Fisher => commands::fisher(&cfg, &dir, out),
        Command::Entropy => commands::entropy(&cfg, &dir, out),
    })
}
