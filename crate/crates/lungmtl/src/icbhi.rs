//! ICBHI-layout corpus ingestion: paired `.wav` / `.txt` files, a
//! diagnosis table and an optional demographics table.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use lungmtl_core::corpus::{
    parse_annotations, parse_demographics, parse_diagnoses, parse_filename, recording_sound_label, AudioClip,
    CycleAnnotation, DemographicRecord, DiseaseLabel, RecordingName, SoundLabel,
};
use lungmtl_core::dsp::{FeatureMatrix, MfccExtractor};
use rayon::prelude::*;

use crate::error::{Context, Error, Result};
use crate::features::FeatureRecord;
use crate::fsio::read_to_string;
use crate::wav::read_wav;

/// One annotated recording with both labels resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub stem: String,
    pub name: RecordingName,
    pub wav_path: PathBuf,
    pub cycles: Vec<CycleAnnotation>,
    pub sound: SoundLabel,
    pub disease: DiseaseLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    /// Sorted by file stem.
    pub recordings: Vec<Recording>,
    pub demographics: Vec<DemographicRecord>,
    pub skipped: Vec<Skipped>,
}

/// Recording- and cycle-level class tallies.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusCounts {
    pub recordings: usize,
    pub cycles: usize,
    pub cycles_crackle_only: usize,
    pub cycles_wheeze_only: usize,
    pub cycles_both: usize,
    pub cycles_normal: usize,
    /// Indexed by [`SoundLabel::index`].
    pub sound: [usize; SoundLabel::COUNT],
    /// Indexed by [`DiseaseLabel::index`].
    pub disease: [usize; DiseaseLabel::COUNT],
}

impl Corpus {
    pub fn is_empty(&self) -> bool {
        self.recordings.is_empty()
    }

    pub fn counts(&self) -> CorpusCounts {
        let mut c = CorpusCounts { recordings: self.recordings.len(), ..Default::default() };
        for r in &self.recordings {
            c.sound[r.sound.index()] += 1;
            c.disease[r.disease.index()] += 1;
            for cy in &r.cycles {
                c.cycles += 1;
                match (cy.crackle, cy.wheeze) {
                    (true, false) => c.cycles_crackle_only += 1,
                    (false, true) => c.cycles_wheeze_only += 1,
                    (true, true) => c.cycles_both += 1,
                    (false, false) => c.cycles_normal += 1,
                }
            }
        }
        c
    }
}

fn skip(skipped: &mut Vec<Skipped>, path: &Path, reason: String) {
    log::warn!("skipping {}: {reason}", path.display());
    skipped.push(Skipped { path: path.to_path_buf(), reason });
}

/// Reads the diagnosis table into `patient_id -> name`.
pub fn read_diagnoses(path: &Path) -> Result<BTreeMap<u32, String>> {
    let text = read_to_string(path)?;
    Ok(parse_diagnoses(&text).context(|| path.display().to_string())?.into_iter().collect())
}

/// Demographic records with a derivable BMI; other rows are logged and
/// left out.
pub fn read_demographics(path: &Path) -> Result<Vec<DemographicRecord>> {
    let text = read_to_string(path)?;
    let rows = parse_demographics(&text).context(|| path.display().to_string())?;
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        match row.to_record() {
            Ok(r) => out.push(r),
            Err(e) => log::warn!("{}: excluding patient {}: {e}", path.display(), row.patient_id),
        }
    }
    Ok(out)
}

/// Pairs every `.wav` in `audio_dir` with its same-stem `.txt` annotation
/// and attaches the patient's diagnosis. Recordings without an annotation,
/// with an unparseable name, or whose patient has no known diagnosis are
/// reported in [`Corpus::skipped`].
pub fn load_corpus(audio_dir: &Path, diagnosis_file: &Path, demographics_file: Option<&Path>) -> Result<Corpus> {
    let diagnoses = read_diagnoses(diagnosis_file)?;
    let demographics = match demographics_file {
        Some(p) => read_demographics(p)?,
        None => Vec::new(),
    };
    let mut wavs: Vec<PathBuf> = fs::read_dir(audio_dir)
        .map_err(Error::io(audio_dir))?
        .map(|e| e.map(|e| e.path()).map_err(Error::io(audio_dir)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    wavs.sort();

    let mut corpus = Corpus { demographics, ..Default::default() };
    for wav_path in wavs {
        let stem = wav_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let name = match parse_filename(&stem) {
            Ok(n) => n,
            Err(e) => {
                skip(&mut corpus.skipped, &wav_path, e.to_string());
                continue;
            }
        };
        let txt = wav_path.with_extension("txt");
        if !txt.is_file() {
            skip(&mut corpus.skipped, &wav_path, "no annotation file".into());
            continue;
        }
        let cycles = parse_annotations(&read_to_string(&txt)?).context(|| txt.display().to_string())?;
        let disease = match diagnoses.get(&name.patient_id) {
            None => {
                skip(&mut corpus.skipped, &wav_path, format!("patient {} has no diagnosis", name.patient_id));
                continue;
            }
            Some(d) => match d.parse::<DiseaseLabel>() {
                Ok(d) => d,
                Err(e) => {
                    skip(&mut corpus.skipped, &wav_path, e.to_string());
                    continue;
                }
            },
        };
        corpus.recordings.push(Recording {
            sound: recording_sound_label(&cycles),
            stem,
            name,
            wav_path,
            cycles,
            disease,
        });
    }
    Ok(corpus)
}

/// Whether each recording becomes one example or one example per cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Granularity {
    #[default]
    Recording,
    Cycle,
}

fn cycle_clip(clip: &AudioClip, c: &CycleAnnotation, i: usize) -> lungmtl_core::Result<AudioClip> {
    let sr = clip.sample_rate_hz() as f64;
    let n = clip.samples().len();
    let a = ((c.start_s * sr).round() as usize).min(n);
    let b = ((c.end_s * sr).round() as usize).clamp(a, n);
    AudioClip::new(clip.samples()[a..b].to_vec(), clip.sample_rate_hz(), clip.patient_id, format!("{}#{i}", clip.recording_id))
}

fn extract_recording(rec: &Recording, ex: &MfccExtractor, granularity: Granularity) -> Result<Vec<FeatureRecord>> {
    let clip = read_wav(&rec.wav_path)?;
    let ctx = || rec.wav_path.display().to_string();
    let one = |clip: &AudioClip, sound: SoundLabel| -> Result<FeatureRecord> {
        let features: FeatureMatrix = ex.extract(clip).context(ctx)?;
        Ok(FeatureRecord {
            id: clip.recording_id.clone(),
            patient_id: rec.name.patient_id,
            sound,
            disease: rec.disease,
            features,
        })
    };
    match granularity {
        Granularity::Recording => Ok(vec![one(&clip, rec.sound)?]),
        Granularity::Cycle => rec
            .cycles
            .iter()
            .enumerate()
            .filter_map(|(i, c)| match cycle_clip(&clip, c, i) {
                Ok(seg) => Some(one(&seg, SoundLabel::from_flags(c.crackle, c.wheeze))),
                Err(lungmtl_core::Error::EmptyAudio) => {
                    log::warn!("{}: cycle {i} lies outside the audio; skipped", rec.wav_path.display());
                    None
                }
                Err(e) => Some(Err(Error::Core { context: ctx(), source: e })),
            })
            .collect(),
    }
}

/// Reads and featurizes every recording on the current rayon pool. Output
/// order follows `recordings`, independent of scheduling.
pub fn extract_corpus(recordings: &[Recording], ex: &MfccExtractor, granularity: Granularity) -> Result<Vec<FeatureRecord>> {
    let per: Vec<Vec<FeatureRecord>> =
        recordings.par_iter().map(|r| extract_recording(r, ex, granularity)).collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}
