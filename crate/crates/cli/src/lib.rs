//! Command-line front end for the `dvrl-core` valuation engine.

use std::ffi::OsString;
use std::fmt;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

pub mod commands;
pub mod config;

pub use config::{CommonArgs, Method, RunConfig};

/// An invalid configuration, reported with exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid `{}`: {}", self.field, self.reason)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Parser, Debug)]
#[command(name = "dvrl", version, about = "Data valuation with reinforcement learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate a value for every training row and write values.csv.
    Value(CommonArgs),
    /// Corrupted-sample discovery curve (training CSV needs a `corrupted` column).
    Discover(CommonArgs),
    /// Test metric after removing the most and least valuable rows.
    RemoveCurve(CommonArgs),
    /// Compare DVRL re-weighting with plain, clean-only and validation-only training.
    Robust(CommonArgs),
    /// Value a source set against a target-domain validation set.
    Adapt(CommonArgs),
    /// Discovery curves for several validation-set sizes.
    SweepValidation(SweepArgs),
    /// Inject label or feature noise into a training CSV.
    Corrupt(CorruptArgs),
    /// Write synthetic train/validation/test CSV files.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated validation sizes.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
pub struct CorruptArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Fraction of rows whose label is flipped.
    #[arg(long, conflicts_with = "sigma")]
    pub ratio: Option<f64>,
    /// Standard deviation of additive feature noise (standardized units).
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Isotropic Gaussian class blobs.
    Blobs,
    /// Two domains with different labelling rules.
    Shift,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "blobs")]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 1000)]
    pub train_rows: usize,
    #[arg(long, default_value_t = 400)]
    pub validation_rows: usize,
    #[arg(long, default_value_t = 1000)]
    pub test_rows: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 3.0)]
    pub separation: f64,
    /// Label-flip ratio applied to the training split.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Share of domain-B rows in the training split (`shift` only).
    #[arg(long, default_value_t = 0.5)]
    pub source_b_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: std::path::PathBuf,
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
/// Failures print a one-line JSON error record on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let record = json!({"error": "config", "field": "argv", "reason": e.to_string().trim()});
            eprintln!("{record}");
            return 2;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(err) => report_error(&err),
    }
}

fn report_error(err: &anyhow::Error) -> i32 {
    if let Some(c) = err.downcast_ref::<ConfigError>() {
        eprintln!("{}", json!({"error": "config", "field": c.field, "reason": c.reason}));
        return 2;
    }
    if let Some(dvrl_core::Error::Config { field, reason }) = err.downcast_ref::<dvrl_core::Error>() {
        eprintln!("{}", json!({"error": "config", "field": field, "reason": reason}));
        return 2;
    }
    let trace: Vec<String> = err.chain().map(ToString::to_string).collect();
    eprintln!("{}", json!({"error": "runtime", "message": err.to_string(), "trace": trace}));
    1
}
