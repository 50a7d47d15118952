//! RIFF/WAVE reading and 16-bit PCM writing.

use std::io::Seek;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use lungmtl_core::corpus::{parse_filename, AudioClip};

use crate::error::{Context, Error, Result};
use crate::fsio::atomic_write;

fn map_hound(path: &Path, e: hound::Error) -> Error {
    let path = path.to_path_buf();
    match e {
        hound::Error::IoError(source) => Error::Io { path, source },
        hound::Error::FormatError(reason) => Error::MalformedHeader { path, reason: reason.into() },
        hound::Error::UnfinishedSample => Error::MalformedHeader { path, reason: "truncated sample data".into() },
        hound::Error::TooWide => Error::UnsupportedEncoding { path, reason: "sample width too large".into() },
        hound::Error::InvalidSampleFormat => {
            Error::UnsupportedEncoding { path, reason: "sample format does not match bit depth".into() }
        }
        hound::Error::Unsupported => Error::UnsupportedEncoding { path, reason: "compressed or unknown format".into() },
    }
}

/// Decodes interleaved samples to mono in [-1, 1]. Integer PCM of `b` bits
/// is scaled by `1 / 2^(b-1)` (1/32768 for 16-bit); channels are averaged.
pub fn read_wav_samples(path: &Path) -> Result<(Vec<f64>, u32)> {
    let reader = WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::MalformedHeader { path: path.to_path_buf(), reason: "zero channels".into() });
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (SampleFormat::Float, bits) => {
            return Err(Error::UnsupportedEncoding { path: path.to_path_buf(), reason: format!("{bits}-bit float") })
        }
        (SampleFormat::Int, bits) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| map_hound(path, e))?
        }
    };
    let mono = if channels == 1 {
        interleaved
    } else {
        interleaved.chunks_exact(channels).map(|f| f.iter().sum::<f64>() / channels as f64).collect()
    };
    Ok((mono, spec.sample_rate))
}

/// Reads a WAV file as a mono clip. The recording id is the file stem; the
/// patient id comes from an ICBHI-style name and is 0 otherwise.
pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let (samples, rate) = read_wav_samples(path)?;
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let patient_id = parse_filename(&stem).map(|n| n.patient_id).unwrap_or(0);
    AudioClip::new(samples, rate, patient_id, stem).context(|| path.display().to_string())
}

/// Nearest 16-bit code for a sample in [-1, 1].
pub fn to_pcm16(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn write_pcm16<W: std::io::Write + Seek>(w: W, samples: &[f64], sample_rate_hz: u32) -> hound::Result<()> {
    let spec = WavSpec { channels: 1, sample_rate: sample_rate_hz, bits_per_sample: 16, sample_format: SampleFormat::Int };
    let mut writer = WavWriter::new(w, spec)?;
    for &s in samples {
        writer.write_sample(to_pcm16(s))?;
    }
    writer.finalize()
}

/// Writes a mono 16-bit PCM file atomically.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    atomic_write(path, |w| write_pcm16(w, clip.samples(), clip.sample_rate_hz()).map_err(|e| map_hound(path, e)))
}
