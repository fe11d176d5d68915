use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "pmri", version, about = "Calibrationless parallel-MRI reconstruction lab")]
pub struct Cli {
    /// Process datasets on a single thread.
    #[arg(long, global = true)]
    pub deterministic: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate phantom datasets.
    Generate(GenerateArgs),
    /// Reconstruct every dataset in a data directory.
    Reconstruct(ReconstructArgs),
    /// Train an unrolled network.
    Train(TrainArgs),
    /// Score reconstructions against their references.
    Evaluate(EvaluateArgs),
    /// Merge evaluation reports and rank methods.
    Compare(CompareArgs),
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateArgs {
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 6.0)]
    pub accel: f64,
    #[arg(long, default_value_t = 4)]
    pub coils: usize,
    /// Standard deviation of the complex k-space noise.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    /// Seed of the first dataset; dataset `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Image side length in pixels.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Fraction of k-space (per axis) that is always sampled.
    #[arg(long, default_value_t = 0.04)]
    pub center_fraction: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ZeroFilled,
    Clear,
    Idslr,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ZeroFilled => "zero-filled",
            Method::Clear => "clear",
            Method::Idslr => "idslr",
        }
    }
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Directory written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    /// Trained model; required for `idslr`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// JSON run config (solver settings for `clear`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Method tag used in reports (defaults to the method, or `idslr-<mode>`).
    #[arg(long)]
    pub tag: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    Joint,
    ReconOnly,
    Cascade,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value = "joint")]
    pub mode: TrainMode,
    /// Overrides `labelled_fraction` from the config.
    #[arg(long)]
    pub labelled_fraction: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training data written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    /// Overrides `epochs` from the config.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateArgs {
    /// Directory written by `reconstruct` (or a data directory, to score the references).
    #[arg(long)]
    pub recon: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Also score segmentations (Dice per tissue class).
    #[arg(long)]
    pub seg: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct CompareArgs {
    /// Report CSVs written by `evaluate`.
    #[arg(long, num_args = 1.., required = true)]
    pub reports: Vec<PathBuf>,
    /// Optional path for the merged CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
