//! TOML run configuration. Every section and field is optional; command
//! line flags override whatever the file sets.

use std::path::{Path, PathBuf};

use lungmtl_core::dsp::MfccConfig;
use lungmtl_core::model::{ArchId, JointLossConfig, TrainConfig};
use lungmtl_core::risk::{ForestConfig, SoftmaxConfig, SvmConfig};
use serde::{Deserialize, Serialize};

use crate::checkpoint::SplitSpec;
use crate::error::{Error, Result};
use crate::fsio::read_to_string;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub audio_dir: Option<PathBuf>,
    pub diagnosis_file: Option<PathBuf>,
    pub demographics_file: Option<PathBuf>,
    pub feature_file: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub history_file: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub arch: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { arch: ArchId::MobileNetMtl.to_string() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RiskKind {
    #[default]
    Forest,
    Softmax,
    Svm,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskSection {
    pub model: RiskKind,
    pub forest: ForestConfig,
    pub softmax: SoftmaxConfig,
    pub svm: SvmConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_per_class: usize,
    pub seed: u64,
    pub sample_rate_hz: u32,
    pub duration_s: f64,
    /// Rows in the generated demographics table.
    pub demographics: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self { n_per_class: 40, seed: 42, sample_rate_hz: 4000, duration_s: 5.0, demographics: 500 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractSection {
    /// One example per annotated cycle instead of per recording.
    pub cycles: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Thread count for ingestion and forest fitting; all cores when unset.
    pub workers: Option<usize>,
    /// Train in 64-bit floats.
    pub float64: bool,
    pub paths: Paths,
    pub mfcc: MfccConfig,
    pub extract: ExtractSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub loss: JointLossConfig,
    pub split: SplitSpec,
    pub risk: RiskSection,
    pub synth: SynthSection,
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::bad_file(path, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_to_string(path)?, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config is representable in TOML")
    }

    pub fn arch(&self) -> Result<ArchId> {
        self.model.arch.parse().map_err(|e: lungmtl_core::Error| Error::Usage(e.to_string()))
    }

    /// Applies a global `--seed`: training, split, forest and generator
    /// seeds all take it.
    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.split.seed = seed;
        self.risk.forest.seed = seed;
        self.synth.seed = seed;
    }
}

/// Returns the configured path or a usage error naming the flag and key.
pub fn require<'a>(p: &'a Option<PathBuf>, flag: &str, key: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Usage(format!("missing {flag} (or `paths.{key}` in the config file)")))
}
