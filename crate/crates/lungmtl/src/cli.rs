//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RiskKind;

#[derive(Debug, Parser)]
#[command(name = "lungmtl", version, about = "Joint lung sound / lung disease classification and COPD risk levels")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for training, splits, forests and the synthetic generator.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for ingestion and forest fitting (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Train the network in 64-bit floats.
    #[arg(long, global = true)]
    pub float64: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus in ICBHI layout.
    Synth(SynthArgs),
    /// Extract MFCC features for every recording into one feature file.
    Extract(ExtractArgs),
    /// Train a multi-task network; writes a checkpoint and a history CSV.
    Train(TrainArgs),
    /// Classification reports, confusion matrices and ROC curves per head.
    Eval(EvalArgs),
    /// Classify a single WAV file; prints one JSON line.
    Predict(PredictArgs),
    /// COPD risk levels from demographics.
    #[command(subcommand)]
    Risk(RiskCommand),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory (`audio/`, `diagnosis.csv`, `demographics.txt`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n_per_class: Option<usize>,
    /// Clip length in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub sample_rate: Option<u32>,
    /// Rows in the demographics table.
    #[arg(long)]
    pub demographics: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub audio_dir: Option<PathBuf>,
    /// `patient_id,diagnosis` table.
    #[arg(long)]
    pub diagnosis: Option<PathBuf>,
    /// Feature file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// One example per annotated respiratory cycle.
    #[arg(long)]
    pub cycles: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// History CSV to write (default: next to the checkpoint).
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// `mobilenet-mtl` or `cnn2d-mtl`.
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Fraction of examples used for training.
    #[arg(long)]
    pub split_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum EvalSet {
    /// Held-out part of the checkpoint's split.
    #[default]
    Test,
    /// Training part of the checkpoint's split.
    Train,
    /// Every example in the feature file.
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Directory for report, confusion and ROC CSVs.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub on: EvalSet,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    pub wav: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum RiskCommand {
    /// Apply the age/BMI/gender rule to every record.
    Label(RiskLabelArgs),
    /// Fit a classifier on rule labels with a stratified split.
    Fit(RiskFitArgs),
    /// Predict levels with a fitted classifier and score them against the rule.
    Predict(RiskPredictArgs),
}

#[derive(Debug, Args)]
pub struct RiskLabelArgs {
    #[arg(long)]
    pub demographics: Option<PathBuf>,
    /// CSV output (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RiskFitArgs {
    #[arg(long)]
    pub demographics: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<RiskKind>,
    /// Checkpoint to write.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RiskPredictArgs {
    #[arg(long)]
    pub demographics: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// CSV output (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}
