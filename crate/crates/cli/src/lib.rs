//! Command-line front end: scenario files in, CSV tables and plot scripts out.
//!
//! Exit status: 0 success, 1 negative verdict, 2 usage or configuration
//! error, 3 numerical failure. Failures also print a one-line JSON record
//! on stderr.

pub mod commands;
pub mod config;
pub mod report;
pub mod selftest;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use retrofit_core::youla::RETROFIT_TOL;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: std::io::Error },
    #[error("invalid config {}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] retrofit_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use retrofit_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Read { .. } | CliError::Write { .. } | CliError::Config { .. } => 2,
            CliError::Core(E::Config(_) | E::DimensionMismatch(_) | E::PortWidth(_) | E::MissingPort(_)) => 2,
            CliError::Core(E::NotStabilizing { .. } | E::InfeasibleBound { .. } | E::PreexistingInstability) => 1,
            CliError::Core(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Read { .. } => "read",
            CliError::Write { .. } => "write",
            CliError::Config { .. } => "config",
            CliError::Core(_) => "computation",
        }
    }

    /// Machine-readable error record.
    pub fn record(&self, command: &str) -> String {
        json!({
            "command": command,
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

#[derive(Debug, Parser)]
#[command(name = "retrofit", version, about = "Retrofit controller synthesis, verification and grid experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for CSV tables and plot scripts.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Simulation step in seconds.
    #[arg(long, global = true, default_value_t = 1e-3)]
    pub dt: f64,
    /// Simulated time after the fault clears, in seconds.
    #[arg(long, global = true, default_value_t = 20.0)]
    pub horizon: f64,
    /// Residual norm accepted as a retrofit certificate.
    #[arg(long, global = true, default_value_t = RETROFIT_TOL)]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Certify a controller, Youla parameter or internal stabilizer for a plant.
    Check,
    /// Tune an LQR internal stabilizer under an interaction-gain bound.
    Synthesize,
    /// Network performance bound against the measured closed-loop gain.
    Bound,
    /// Fault experiment with modules added one generator at a time.
    Grid,
    /// Frequency locus of the AGC loop at three load levels.
    Nyquist,
    /// Acceptance suite.
    Selftest,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Synthesize => "synthesize",
            Command::Bound => "bound",
            Command::Grid => "grid",
            Command::Nyquist => "nyquist",
            Command::Selftest => "selftest",
        }
    }
}

pub fn execute(cli: &Cli) -> Result<bool, CliError> {
    if !(cli.dt > 0.0 && cli.horizon > 0.0 && cli.tol >= 0.0) {
        return Err(CliError::Usage("--dt and --horizon must be positive and --tol non-negative".into()));
    }
    let out = report::OutDir::create(&cli.out)?;
    let config = cli.config.as_deref();
    match cli.command {
        Command::Check => commands::check(config, &out, cli.tol),
        Command::Synthesize => commands::synthesize(config, &out, cli.tol),
        Command::Bound => commands::bound(config, &out),
        Command::Grid => commands::grid(config, &out, cli.dt, cli.horizon),
        Command::Nyquist => commands::nyquist(config, &out),
        Command::Selftest => commands::selftest(&out, cli.seed),
    }
}

/// Parses `args`, runs the command and maps the outcome to an exit status.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            if code != 0 {
                eprintln!("{}", CliError::Usage(e.kind().to_string()).record(""));
            }
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("{}", e.record(cli.command.name()));
            ExitCode::from(e.exit_code())
        }
    }
}
