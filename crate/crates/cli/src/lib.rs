//! `floodloss` command line: ingest claims, run backtests, merge reports.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

pub mod commands;
pub mod manifest;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use commands::{cmd_backtest, cmd_ingest, cmd_report, ReportFile};
pub use manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// The synthetic configuration shipped with the binary.
pub const SYNTHETIC_CONFIG: &str = include_str!("../configs/synthetic.conf");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "floodloss", version, about = "Flood-loss regression backtests over NFIP-style claims")]
pub struct Cli {
    /// Claims table (comma-separated, NFIP field names).
    #[arg(long, global = true, env = "FLOODLOSS_CLAIMS")]
    pub claims: Option<PathBuf>,
    /// Consumer price index table (`year,index`).
    #[arg(long, global = true, env = "FLOODLOSS_CPI")]
    pub cpi: Option<PathBuf>,
    /// Schema registry file; the built-in NFIP registry when absent.
    #[arg(long, global = true, env = "FLOODLOSS_SCHEMA")]
    pub schema: Option<PathBuf>,
    /// Experiment configuration (`key = value` lines).
    #[arg(long, global = true, env = "FLOODLOSS_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "FLOODLOSS_OUT")]
    pub out: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true, env = "FLOODLOSS_SEED")]
    pub seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "FLOODLOSS_JOBS")]
    pub jobs: Option<usize>,
    /// Use the bundled synthetic county instead of a claims file.
    #[arg(long, global = true, env = "FLOODLOSS_SYNTHETIC")]
    pub synthetic: bool,
    /// Tabular output format.
    #[arg(long, global = true, value_enum, env = "FLOODLOSS_FORMAT", default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, inflation-adjust and repair a claims table.
    Ingest,
    /// Run the configured backtest protocol.
    Backtest,
    /// Merge report files into summary and per-county plot data.
    Report {
        /// Directory holding report JSON files.
        reports: PathBuf,
    },
}

/// An error the user can fix by changing arguments or configuration.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

/// Map an error to the exit-code contract.
pub fn exit_code(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_USAGE;
        }
        if let Some(fe) = cause.downcast_ref::<floodloss::Error>() {
            if matches!(fe, floodloss::Error::Config(_) | floodloss::Error::Schema(_)) {
                return EXIT_USAGE;
            }
        }
    }
    EXIT_RUNTIME
}

pub fn execute(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Ingest => cmd_ingest(cli),
        Command::Backtest => cmd_backtest(cli),
        Command::Report { reports } => cmd_report(cli, reports),
    }
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
