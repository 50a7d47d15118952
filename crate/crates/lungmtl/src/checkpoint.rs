//! Versioned JSON checkpoints for network and risk models.

use std::path::Path;

use lungmtl_core::corpus::{DiseaseLabel, SoundLabel};
use lungmtl_core::dsp::MfccConfig;
use lungmtl_core::model::{JointLossConfig, ModelConfig, MtlModel, TrainConfig};
use lungmtl_core::nn::Real;
use lungmtl_core::risk::{RiskLevel, RiskModel};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio::atomic_write_bytes;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    /// Row-major.
    pub values: Vec<f64>,
}

/// How the training data was partitioned, so evaluation can rebuild the
/// held-out set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub ratio: f64,
    pub seed: u64,
    /// Keep each patient's recordings on one side of the split.
    pub by_patient: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { ratio: 0.8, seed: 42, by_patient: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnCheckpoint {
    pub model: ModelConfig,
    pub dtype: String,
    pub mfcc: MfccConfig,
    pub train: TrainConfig,
    pub loss: JointLossConfig,
    pub split: SplitSpec,
    pub sound_classes: Vec<String>,
    pub disease_classes: Vec<String>,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCheckpoint {
    pub features: Vec<String>,
    pub classes: Vec<String>,
    pub split: SplitSpec,
    pub model: RiskModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    NnModel(NnCheckpoint),
    RiskModel(RiskCheckpoint),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    #[serde(flatten)]
    pub payload: Payload,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: Option<u32>,
}

/// A network in whichever precision it was trained in.
#[derive(Debug, Clone)]
pub enum AnyModel {
    F32(MtlModel<f32>),
    F64(MtlModel<f64>),
}

/// Runs `$body` with `$m` bound to the concrete model.
#[macro_export]
macro_rules! with_model {
    ($any:expr, $m:ident => $body:expr) => {
        match $any {
            $crate::checkpoint::AnyModel::F32($m) => $body,
            $crate::checkpoint::AnyModel::F64($m) => $body,
        }
    };
}

/// Settings echoed into a network checkpoint next to its weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnMeta {
    pub mfcc: MfccConfig,
    pub train: TrainConfig,
    pub loss: JointLossConfig,
    pub split: SplitSpec,
}

impl Checkpoint {
    pub fn nn<T: Real>(model: &MtlModel<T>, meta: &NnMeta) -> Self {
        let tensors = model
            .named_tensors()
            .into_iter()
            .map(|(name, t)| NamedTensor { name, shape: t.shape().to_vec(), values: t.to_f64() })
            .collect();
        Checkpoint {
            format_version: FORMAT_VERSION,
            payload: Payload::NnModel(NnCheckpoint {
                model: *model.config(),
                dtype: T::NAME.to_string(),
                mfcc: meta.mfcc,
                train: meta.train,
                loss: meta.loss,
                split: meta.split,
                sound_classes: SoundLabel::ALL.iter().map(|s| s.name().to_string()).collect(),
                disease_classes: DiseaseLabel::ALL.iter().map(|d| d.name().to_string()).collect(),
                tensors,
            }),
        }
    }

    pub fn risk(model: RiskModel, split: SplitSpec) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            payload: Payload::RiskModel(RiskCheckpoint {
                features: ["age_years", "gender", "bmi_kg_m2"].map(String::from).to_vec(),
                classes: RiskLevel::ALL.iter().map(|r| r.name().to_string()).collect(),
                split,
                model,
            }),
        }
    }

    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint values are finite");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::UnreadableCheckpoint { path: path.to_path_buf(), reason };
        let probe: VersionProbe = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        match probe.format_version {
            Some(FORMAT_VERSION) => {}
            Some(v) => return Err(bad(format!("format version {v}, this build reads {FORMAT_VERSION}"))),
            None => return Err(bad("missing format_version".into())),
        }
        serde_json::from_str(text).map_err(|e| bad(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Payload::NnModel(nn) = &self.payload {
            if nn.tensors.iter().any(|t| t.values.iter().any(|v| !v.is_finite())) {
                return Err(Error::bad_file(path, "refusing to save non-finite weights"));
            }
        }
        atomic_write_bytes(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::UnreadableCheckpoint { path: path.to_path_buf(), reason: e.to_string() })?;
        Self::from_json(&text, path)
    }

    pub fn into_nn(self, path: &Path) -> Result<NnCheckpoint> {
        match self.payload {
            Payload::NnModel(nn) => Ok(nn),
            Payload::RiskModel(_) => Err(Error::UnreadableCheckpoint {
                path: path.to_path_buf(),
                reason: "holds a risk model, expected a network".into(),
            }),
        }
    }

    pub fn into_risk(self, path: &Path) -> Result<RiskCheckpoint> {
        match self.payload {
            Payload::RiskModel(r) => Ok(r),
            Payload::NnModel(_) => Err(Error::UnreadableCheckpoint {
                path: path.to_path_buf(),
                reason: "holds a network, expected a risk model".into(),
            }),
        }
    }
}

fn restore<T: Real>(nn: &NnCheckpoint, path: &Path) -> Result<MtlModel<T>> {
    let bad = |reason: String| Error::UnreadableCheckpoint { path: path.to_path_buf(), reason };
    let mut model = MtlModel::<T>::from_config(nn.model, 0).map_err(|e| bad(e.to_string()))?;
    let expected = model.named_tensors().len();
    if nn.tensors.len() != expected {
        return Err(bad(format!("{} tensors stored, architecture has {expected}", nn.tensors.len())));
    }
    for t in &nn.tensors {
        let values = t.values.iter().map(|&v| T::cast(v)).collect();
        model.set_tensor(&t.name, &t.shape, values).map_err(|e| bad(format!("tensor `{}`: {e}", t.name)))?;
    }
    Ok(model)
}

impl NnCheckpoint {
    pub fn build_model(&self, path: &Path) -> Result<AnyModel> {
        match self.dtype.as_str() {
            "f32" => restore(self, path).map(AnyModel::F32),
            "f64" => restore(self, path).map(AnyModel::F64),
            other => Err(Error::UnreadableCheckpoint { path: path.to_path_buf(), reason: format!("unknown dtype `{other}`") }),
        }
    }
}
