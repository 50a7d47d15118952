//! Binary feature dump: a magic line, a one-line JSON header carrying the
//! MFCC settings, then fixed-size little-endian records.
//!
//! Record layout: `u32` id length, id bytes (UTF-8), `u32` patient id,
//! `u8` sound index, `u8` disease index, `rows * cols` `f64` row-major.

use std::io::{Read, Write};
use std::path::Path;

use lungmtl_core::corpus::{DiseaseLabel, SoundLabel};
use lungmtl_core::dsp::{FeatureMatrix, MfccConfig};
use lungmtl_core::model::Dataset;
use lungmtl_core::nn::{Real, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Context, Error, Result};
use crate::fsio::atomic_write;

pub const MAGIC: &str = "LUNGMTL-FEATURES 1";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub id: String,
    pub patient_id: u32,
    pub sound: SoundLabel,
    pub disease: DiseaseLabel,
    pub features: FeatureMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub mfcc: MfccConfig,
    pub records: Vec<FeatureRecord>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    mfcc: MfccConfig,
    fingerprint: String,
    records: usize,
    rows: usize,
    cols: usize,
}

impl FeatureFile {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `(rows, cols)` every matrix in the file has.
    pub fn matrix_shape(&self) -> (usize, usize) {
        (self.mfcc.n_coefficients, self.mfcc.target_frames)
    }

    pub fn sound_labels(&self) -> Vec<SoundLabel> {
        self.records.iter().map(|r| r.sound).collect()
    }

    /// Stacks the records at `idx` into a `[n, 1, rows, cols]` dataset.
    pub fn dataset<T: Real>(&self, idx: &[usize]) -> lungmtl_core::Result<Dataset<T>> {
        let (rows, cols) = self.matrix_shape();
        let mut data = Vec::with_capacity(idx.len() * rows * cols);
        for &i in idx {
            data.extend(self.records[i].features.values().iter().map(|&v| T::cast(v)));
        }
        let features = Tensor::from_vec(&[idx.len(), 1, rows, cols], data)?;
        let pick = |f: &dyn Fn(&FeatureRecord) -> usize| idx.iter().map(|&i| f(&self.records[i])).collect();
        Dataset::new(
            features,
            pick(&|r| r.sound.index()),
            pick(&|r| r.disease.index()),
            idx.iter().map(|&i| self.records[i].patient_id).collect(),
        )
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.records.len()).collect()
    }
}

pub fn write_features(path: &Path, file: &FeatureFile) -> Result<()> {
    let (rows, cols) = file.matrix_shape();
    let fp = file.mfcc.fingerprint();
    for r in &file.records {
        if (r.features.rows(), r.features.cols()) != (rows, cols) || r.features.config_fingerprint != fp {
            return Err(Error::bad_file(path, format!("record `{}` was not extracted with the file's MFCC settings", r.id)));
        }
    }
    let header = Header { mfcc: file.mfcc, fingerprint: format!("{fp:016x}"), records: file.records.len(), rows, cols };
    let header = serde_json::to_string(&header).map_err(|e| Error::bad_file(path, e.to_string()))?;
    atomic_write(path, |w| {
        let mut put = || -> std::io::Result<()> {
            writeln!(w, "{MAGIC}")?;
            writeln!(w, "{header}")?;
            for r in &file.records {
                w.write_all(&(r.id.len() as u32).to_le_bytes())?;
                w.write_all(r.id.as_bytes())?;
                w.write_all(&r.patient_id.to_le_bytes())?;
                w.write_all(&[r.sound.index() as u8, r.disease.index() as u8])?;
                for v in r.features.values() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            Ok(())
        };
        put().map_err(Error::io(path))
    })
}

fn read_line(bytes: &[u8], pos: &mut usize) -> Option<String> {
    let rest = &bytes[*pos..];
    let end = rest.iter().position(|&b| b == b'\n')?;
    *pos += end + 1;
    String::from_utf8(rest[..end].to_vec()).ok()
}

/// Reads a feature file. With `expected`, the file's MFCC fingerprint must
/// match or [`Error::ConfigMismatch`] is returned.
pub fn read_features(path: &Path, expected: Option<&MfccConfig>) -> Result<FeatureFile> {
    let mut bytes = Vec::new();
    std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(Error::io(path))?;
    let bad = |reason: &str| Error::bad_file(path, format!("not a feature file: {reason}"));
    let mut pos = 0;
    if read_line(&bytes, &mut pos).as_deref() != Some(MAGIC) {
        return Err(bad("missing magic line"));
    }
    let header: Header = read_line(&bytes, &mut pos)
        .and_then(|l| serde_json::from_str(&l).ok())
        .ok_or_else(|| bad("unreadable header"))?;
    let fp = header.mfcc.fingerprint();
    if header.fingerprint != format!("{fp:016x}") {
        return Err(bad("header fingerprint does not match its MFCC settings"));
    }
    if let Some(cfg) = expected {
        if cfg.fingerprint() != fp {
            return Err(Error::ConfigMismatch { path: path.to_path_buf(), expected: cfg.fingerprint(), found: fp });
        }
    }
    if (header.rows, header.cols) != (header.mfcc.n_coefficients, header.mfcc.target_frames) {
        return Err(bad("matrix shape disagrees with MFCC settings"));
    }

    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated record"))?;
        pos += n;
        Ok(s)
    };
    let cells = header.rows * header.cols;
    let mut records = Vec::with_capacity(header.records);
    for _ in 0..header.records {
        let id_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let id = String::from_utf8(take(id_len)?.to_vec()).map_err(|_| bad("record id is not UTF-8"))?;
        let patient_id = u32::from_le_bytes(take(4)?.try_into().unwrap());
        let labels = take(2)?;
        let sound = SoundLabel::from_index(labels[0] as usize).ok_or_else(|| bad("sound label out of range"))?;
        let disease = DiseaseLabel::from_index(labels[1] as usize).ok_or_else(|| bad("disease label out of range"))?;
        let values = take(8 * cells)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let features =
            FeatureMatrix::new(header.rows, header.cols, values, fp).context(|| format!("{}: record `{id}`", path.display()))?;
        records.push(FeatureRecord { id, patient_id, sound, disease, features });
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes after the last record"));
    }
    Ok(FeatureFile { mfcc: header.mfcc, records })
}
