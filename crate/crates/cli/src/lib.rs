//! `geoctl` command line: reads a JSON scenario, runs one library workflow
//! and writes CSV/JSON results.

pub mod commands;
pub mod config;
pub mod emit;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{0}")]
    UnknownCommand(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Schema(_) => 2,
            CliError::UnknownCommand(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io(_) => 5,
        }
    }
}

impl From<geoctl::Error> for CliError {
    fn from(e: geoctl::Error) -> Self {
        use geoctl::Error as E;
        match e {
            E::Parse(_) | E::InvalidInput(_) | E::Normalization(_) | E::Dimension { .. } => {
                CliError::Schema(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "geoctl", version, about = "Extremals, cusps and local syntheses of affine control systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Tolerance override for the command's main numerical test.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Synthesis grid `w_min,w_max,s_min,s_max,n`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Seed for randomized checks.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Integrate extremals (direct or Goh form) to a trajectory CSV.
    Geodesic,
    /// Detect and classify cusp points to a JSON report.
    Cusp,
    /// Value-function gap formulas and matching residuals to CSV.
    ValueGap,
    /// Loci and stratification of the terminal manifold.
    Synthesis,
    /// McKeithan exceptional locus and terminal-point classes to CSV.
    Mckeithan,
    /// Run the invariant suite; nonzero exit on any failure.
    Check,
}

impl Cli {
    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn tol(&self) -> Result<Option<f64>, CliError> {
        match self.tol {
            Some(t) if !(t.is_finite() && t > 0.0) => Err(CliError::Schema(format!("--tol must be positive, got {t}"))),
            t => Ok(t),
        }
    }
}

/// Result of argument parsing: a command to run, or text to print with an
/// exit code (help, version, usage errors).
pub enum Parsed {
    Run(Cli),
    Exit(i32, String),
}

pub fn parse<I, T>(args: I) -> Parsed
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => Parsed::Run(cli),
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                ErrorKind::InvalidSubcommand => 3,
                _ => 2,
            };
            Parsed::Exit(code, e.render().to_string())
        }
    }
}

fn cap_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("GSL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Schema(format!("GSL_THREADS must be a positive integer, got {v:?}")))?;
    // A pool built earlier in the same process keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    cap_threads()?;
    cli.tol()?;
    if cli.command != Command::Check {
        let out = cli.out_dir();
        std::fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    }
    match cli.command {
        Command::Geodesic => commands::geodesic(cli),
        Command::Cusp => commands::cusp(cli),
        Command::ValueGap => commands::value_gap(cli),
        Command::Synthesis => commands::synthesis(cli),
        Command::Mckeithan => commands::mckeithan(cli),
        Command::Check => commands::check(cli),
    }
}
