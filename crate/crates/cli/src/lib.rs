//! `gcorrect`: synthesize data, train the base model and corrector, sweep
//! thresholds, correct predictions and estimate intrinsic dimension.

pub mod commands;
pub mod config;
pub mod output;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gesture_corrector::ErrorCategory;

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] gesture_corrector::Error),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// 2 configuration, 3 I/O, 4 numeric, 5 degenerate data.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Core(e) => match e.category() {
                ErrorCategory::Config => 2,
                ErrorCategory::Io => 3,
                ErrorCategory::Numeric => 4,
                ErrorCategory::DegenerateData => 5,
            },
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

#[derive(Debug, Parser)]
#[command(name = "gcorrect", version, about = "Centroid error corrector for gesture classifiers")]
pub struct Cli {
    /// TOML run configuration; command-line flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Seed for every random draw; recorded in each report header.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate base and new-user datasets.
    Synth(SynthArgs),
    /// Fit PCA plus a classifier on base_train.
    TrainBase(TrainBaseArgs),
    /// Fit the corrector on the new user's training split.
    TrainCorrector(TrainCorrectorArgs),
    /// Sweep Δ on new-user train, new-user test and base train.
    Sweep(SweepArgs),
    /// Run base model and corrector over a dataset CSV.
    Correct(CorrectArgs),
    /// Intrinsic dimension over a PC count by degree grid.
    Intdim(IntdimArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for the four split CSVs.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub samples_per_gesture: Option<usize>,
    #[arg(long)]
    pub shift_multiplier: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainBaseArgs {
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// knn, lda, gnb, linear-svm or poly-svm.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub pcs: Option<usize>,
    #[arg(long)]
    pub poly_degree: Option<usize>,
    /// Where to write the model.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also fit on new_user_train and write table1.csv to the report directory.
    #[arg(long)]
    pub table1: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainCorrectorArgs {
    #[arg(long)]
    pub base_model: Option<PathBuf>,
    /// Labelled training data; defaults to new_user_train.csv in the data directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub pcs: Option<usize>,
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub min_error_class: Option<usize>,
    /// Where to write the corrector bundle.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report directory for histogram.csv and the training report.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Histogram bins of whitened distances.
    #[arg(long, default_value_t = 30)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub base_model: Option<PathBuf>,
    #[arg(long)]
    pub corrector: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Number of Δ points in [0, 1].
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrectArgs {
    #[arg(long)]
    pub base_model: Option<PathBuf>,
    #[arg(long)]
    pub corrector: Option<PathBuf>,
    /// Labelled dataset CSV to correct.
    #[arg(long)]
    pub input: PathBuf,
    /// Per-row output CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the bundle's Δ.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Also time this many corrector calls on random inputs.
    #[arg(long, value_name = "CALLS")]
    pub probe_latency: Option<usize>,
}

#[derive(Debug, Args)]
pub struct IntdimArgs {
    /// Dataset CSV; defaults to base_train.csv in the data directory.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub max_samples: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Output CSV; defaults to intdim.csv in the report directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Loads the configuration, applies the flags, validates, then runs the
/// command. Human-readable progress goes to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    commands::apply_overrides(&mut cfg, &cli.command);
    cfg.validate()?;
    log::debug!("effective config: {cfg:?}");
    match &cli.command {
        Command::Synth(_) => commands::synth(&cfg, out),
        Command::TrainBase(a) => commands::train_base(&cfg, a, out),
        Command::TrainCorrector(a) => commands::train_corrector(&cfg, a, out),
        Command::Sweep(_) => commands::sweep(&cfg, out),
        Command::Correct(a) => commands::correct(&cfg, a, out),
        Command::Intdim(a) => commands::intdim(&cfg, a, out),
    }
}
