//! `score` command-line driver.
//!
//! Exit codes: 0 on success, 1 on validation or configuration errors
//! (including usage errors), 2 on I/O errors.

pub mod commands;
pub mod config;
pub mod timing;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use score_core::{DistanceMode, Error, PriorMode, ThresholdMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "score",
    version,
    about = "Contrastive relation extraction over frozen encoder embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a clustered synthetic dataset.
    Synth(SynthArgs),
    /// Train a projection head on a dataset directory.
    Train(TrainArgs),
    /// Predict relation types for a test split.
    Predict(PredictArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Train and score a grid of configurations.
    Gridsearch(GridArgs),
    /// Check a dataset directory against its manifest.
    Validate(ValidateArgs),
    /// Build pair vectors from a token-level file.
    Pairs(PairsArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Synthetic dataset specification (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model file to write; the history goes next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub distance: Option<DistanceMode>,
    #[arg(long)]
    pub temperature: Option<f64>,
}

/// Inference overrides shared by `predict`.
#[derive(Debug, Args)]
pub struct InferenceFlags {
    #[arg(long)]
    pub k: Option<usize>,
    /// Universal threshold `c`.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_parser = ["flat", "informative"])]
    pub prior: Option<String>,
    #[arg(long = "threshold-mode", value_parser = ["universal", "class"])]
    pub threshold_mode: Option<String>,
    /// Named (c, k) preset: nyt10m, nyt10d, disrex, wiki20m, wiki20d.
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset directory; its train split becomes the datastore.
    #[arg(long)]
    pub data: PathBuf,
    /// Samples to predict (defaults to `<data>/test.jsonl`).
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub inference: InferenceFlags,
    /// Accepted for uniformity; inference is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predictions JSONL.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth split JSONL.
    #[arg(long)]
    pub truth: PathBuf,
    /// Manifest declaring the label space (defaults to the one beside `--truth`).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated M values for F1@M.
    #[arg(long = "m-values", value_delimiter = ',')]
    pub m_values: Option<Vec<usize>>,
    /// Include both φ matrices in the report.
    #[arg(long)]
    pub phi: bool,
    /// Report path; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Grid file listing the cells to evaluate.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Replaces the training seed of every cell.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    /// Token-level JSONL input.
    #[arg(long)]
    pub tokens: PathBuf,
    /// Pair-level JSONL output.
    #[arg(long)]
    pub out: PathBuf,
}

impl InferenceFlags {
    pub fn prior_mode(&self) -> Option<PriorMode> {
        self.prior
            .as_deref()
            .map(|p| p.parse().expect("validated by clap"))
    }

    pub fn threshold_mode(&self) -> Option<ThresholdMode> {
        self.threshold_mode
            .as_deref()
            .map(|p| p.parse().expect("validated by clap"))
    }
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_io() {
        EXIT_IO
    } else {
        EXIT_INVALID
    }
}

/// Parses `argv` (program name first) and runs the command.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
            let _ = e.print();
            return code;
        }
    };
    match commands::run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
