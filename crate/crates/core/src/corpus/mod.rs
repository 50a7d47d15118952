//! Recording-level data model for ICBHI-style respiratory corpora.
//!
//! Only the pure parts live here: label derivation, text parsing of the
//! annotation / diagnosis / demographics tables, splits and the synthetic
//! generator. Reading files from disk is done by the `lungmtl` crate.

mod labels;
mod split;
mod synth;
mod tables;

pub use labels::{recording_sound_label, DiseaseLabel, SoundLabel};
pub use split::{grouped_split, stratified_split, Split};
pub use synth::{synth_corpus, synth_demographics, SynthClip, SynthParams};
pub use tables::{
    parse_annotations, parse_demographics, parse_diagnoses, parse_filename, CycleAnnotation,
    DemographicRecord, DemographicRow, Gender, RecordingName,
};

use alloc::string::String;
use alloc::vec::Vec;

use crate::dsp::FeatureMatrix;
use crate::error::{Error, Result};

/// Mono PCM audio normalized to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate_hz: u32,
    pub patient_id: u32,
    pub recording_id: String,
}

impl AudioClip {
    /// Builds a clip, rejecting empty input. Samples outside [-1, 1] are
    /// clamped.
    pub fn new(
        mut samples: Vec<f64>,
        sample_rate_hz: u32,
        patient_id: u32,
        recording_id: impl Into<String>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyAudio);
        }
        if sample_rate_hz == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        for s in samples.iter_mut() {
            if !s.is_finite() {
                return Err(Error::InvalidRecord("non-finite audio sample".into()));
            }
            *s = s.clamp(-1.0, 1.0);
        }
        Ok(Self { samples, sample_rate_hz, patient_id, recording_id: recording_id.into() })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// One model input with both targets attached.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: FeatureMatrix,
    pub sound: SoundLabel,
    pub disease: DiseaseLabel,
    pub patient_id: u32,
}
