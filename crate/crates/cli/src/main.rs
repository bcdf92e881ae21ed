//! `dvip`: train, evaluate and benchmark deep variational implicit processes.
//!
//! Settings are resolved as command-line flags over the `--config` file
//! over built-in defaults. Exit codes: 0 success, 1 I/O failure,
//! 2 configuration or usage error, 3 data error, 4 numeric failure,
//! 5 unreadable checkpoint.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "dvip", version, about = "Deep variational implicit processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train on the training rows of a split; writes checkpoint, history and summary.
    Train(Common),
    /// Metrics of a checkpoint on the rows of a split.
    Eval(EvalArgs),
    /// Per-point predictive mixtures of a checkpoint.
    Predict(EvalArgs),
    /// Prior function draws of the first layer on a 200-point 1-D grid.
    SamplePrior(Common),
    /// Metrics over datasets, depths and splits.
    Benchmark(BenchmarkArgs),
    /// Metrics over prior sample counts.
    AblateSamples(AblateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Run configuration in `key=value` form.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV file with a header row and the target in the last column, or
    /// `synthetic:sine` / `synthetic:moons`. Repeat for benchmarks.
    #[arg(long)]
    pub dataset: Vec<String>,
    /// Checkpoint to read (`train` resumes from it).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of layers `L`.
    #[arg(long, short = 'L')]
    pub depth: Option<usize>,
    /// Prior samples `S` per layer.
    #[arg(long, short = 'S')]
    pub samples: Option<usize>,
    /// Extra configuration setting; overrides the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Rows {
    Train,
    Test,
    All,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Which rows of the split to use.
    #[arg(long, value_enum, default_value = "test")]
    pub rows: Rows,
}

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated depths; defaults to the configured depth.
    #[arg(long, value_delimiter = ',')]
    pub depths: Vec<usize>,
    /// Number of random splits per dataset and depth.
    #[arg(long, default_value_t = 1)]
    pub splits: u64,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated prior sample counts.
    #[arg(long, value_delimiter = ',', default_value = "10,20,40")]
    pub sample_counts: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub splits: u64,
}

pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;
pub const EXIT_CHECKPOINT: u8 = 5;

/// A usage problem found before any work starts.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// Exit code for the first classifiable error in the chain.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<dvip::Error>() {
            return match e {
                dvip::Error::Config(_) | dvip::Error::Contract(_) => EXIT_CONFIG,
                dvip::Error::Data(_) | dvip::Error::Shape(_) => EXIT_DATA,
                dvip::Error::NonFinite { .. } | dvip::Error::NonFiniteGradient(_) => EXIT_NUMERIC,
                dvip::Error::Checkpoint(_) => EXIT_CHECKPOINT,
                dvip::Error::Io(_) => EXIT_IO,
            };
        }
    }
    EXIT_IO
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => commands::train(&c),
        Command::Eval(a) => commands::eval(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::SamplePrior(c) => commands::sample_prior(&c),
        Command::Benchmark(a) => commands::benchmark(&a),
        Command::AblateSamples(a) => commands::ablate_samples(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
