use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::fft::FftPlan;
use crate::corpus::AudioClip;
use crate::error::{Error, Result};

/// Lower bound applied to filterbank energies before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    pub pre_emphasis_alpha: f64,
    pub frame_len_ms: f64,
    pub hop_ms: f64,
    pub n_fft: usize,
    pub n_mel_filters: usize,
    pub n_coefficients: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub target_frames: usize,
    pub target_sample_rate_hz: u32,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            pre_emphasis_alpha: 0.97,
            frame_len_ms: 25.0,
            hop_ms: 10.0,
            n_fft: 512,
            n_mel_filters: 26,
            n_coefficients: 20,
            fmin_hz: 20.0,
            fmax_hz: 2000.0,
            target_frames: 498,
            target_sample_rate_hz: 4000,
        }
    }
}

impl MfccConfig {
    pub fn frame_len_samples(&self) -> usize {
        Float::round(self.frame_len_ms * self.target_sample_rate_hz as f64 / 1000.0) as usize
    }

    pub fn hop_samples(&self) -> usize {
        Float::round(self.hop_ms * self.target_sample_rate_hz as f64 / 1000.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if !(0.0..1.0).contains(&self.pre_emphasis_alpha) {
            return bad(format!("pre-emphasis alpha {} not in [0, 1)", self.pre_emphasis_alpha));
        }
        if self.target_sample_rate_hz == 0 {
            return bad("target sample rate must be positive".into());
        }
        if self.frame_len_samples() < 1 || self.hop_samples() < 1 {
            return bad("frame and hop must each span at least one sample".into());
        }
        if self.n_fft == 0 || !self.n_fft.is_power_of_two() {
            return Err(Error::BadFftSize(self.n_fft));
        }
        if self.n_fft < self.frame_len_samples() {
            return bad(format!("n_fft {} shorter than frame ({} samples)", self.n_fft, self.frame_len_samples()));
        }
        if self.n_mel_filters == 0 || self.n_coefficients == 0 || self.n_coefficients > self.n_mel_filters {
            return bad(format!(
                "need 1 <= n_coefficients ({}) <= n_mel_filters ({})",
                self.n_coefficients, self.n_mel_filters
            ));
        }
        let nyquist = self.target_sample_rate_hz as f64 / 2.0;
        if !(self.fmin_hz >= 0.0 && self.fmin_hz < self.fmax_hz && self.fmax_hz <= nyquist) {
            return bad(format!("need 0 <= fmin < fmax <= {nyquist} Hz"));
        }
        if self.target_frames == 0 {
            return bad("target_frames must be positive".into());
        }
        Ok(())
    }

    /// FNV-1a over every field, in declaration order.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(self.pre_emphasis_alpha.to_bits());
        eat(self.frame_len_ms.to_bits());
        eat(self.hop_ms.to_bits());
        eat(self.n_fft as u64);
        eat(self.n_mel_filters as u64);
        eat(self.n_coefficients as u64);
        eat(self.fmin_hz.to_bits());
        eat(self.fmax_hz.to_bits());
        eat(self.target_frames as u64);
        eat(self.target_sample_rate_hz as u64);
        h
    }
}

/// Coefficients x frames grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    pub config_fingerprint: u64,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, config_fingerprint: u64) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "feature matrix",
                expected: vec![rows, cols],
                found: vec![values.len()],
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRecord("non-finite feature value".into()));
        }
        Ok(Self { rows, cols, values, config_fingerprint })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }
}

/// `y[0] = x[0]`, `y[t] = x[t] - alpha * x[t-1]`.
pub fn pre_emphasis(x: &[f64], alpha: f64) -> Vec<f64> {
    let mut y = Vec::with_capacity(x.len());
    if let Some(&first) = x.first() {
        y.push(first);
        y.extend(x.windows(2).map(|w| w[1] - alpha * w[0]));
    }
    y
}

pub fn hamming(k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![1.0];
    }
    let denom = (k - 1) as f64;
    (0..k).map(|i| 0.54 - 0.46 * Float::cos(2.0 * PI * i as f64 / denom)).collect()
}

pub fn frame_count(len: usize, frame: usize, hop: usize) -> usize {
    if len >= frame {
        1 + (len - frame) / hop
    } else {
        1
    }
}

/// Splits into Hamming-windowed frames of `frame` samples every `hop`
/// samples. A signal shorter than one frame yields a single zero-padded frame.
pub fn frame_and_window(x: &[f64], frame: usize, hop: usize) -> Vec<Vec<f64>> {
    let window = hamming(frame.max(1));
    let n = frame_count(x.len(), frame, hop.max(1));
    (0..n)
        .map(|f| {
            let start = f * hop;
            window
                .iter()
                .enumerate()
                .map(|(k, w)| x.get(start + k).copied().unwrap_or(0.0) * w)
                .collect()
        })
        .collect()
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * Float::log10(1.0 + hz / 700.0)
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (Float::powf(10.0, mel / 2595.0) - 1.0)
}

/// Triangular filters over the one-sided spectrum, each peaking at 1 on its
/// center bin.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    n_filters: usize,
    n_bins: usize,
    weights: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_filters: usize, n_fft: usize, sample_rate_hz: f64, fmin_hz: f64, fmax_hz: f64) -> Result<Self> {
        if n_filters == 0 {
            return Err(Error::InvalidConfig("need at least one mel filter".into()));
        }
        if n_fft == 0 || !n_fft.is_power_of_two() {
            return Err(Error::BadFftSize(n_fft));
        }
        let n_bins = n_fft / 2 + 1;
        let (lo, hi) = (hz_to_mel(fmin_hz), hz_to_mel(fmax_hz));
        let edges: Vec<usize> = (0..n_filters + 2)
            .map(|i| {
                let mel = lo + (hi - lo) * i as f64 / (n_filters + 1) as f64;
                let bin = Float::floor((n_fft + 1) as f64 * mel_to_hz(mel) / sample_rate_hz) as usize;
                bin.min(n_bins - 1)
            })
            .collect();
        let mut weights = vec![0.0; n_filters * n_bins];
        for m in 0..n_filters {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            if left == center || center == right {
                return Err(Error::DegenerateFilter { filter: m, bin: center });
            }
            let row = &mut weights[m * n_bins..(m + 1) * n_bins];
            for (k, v) in row.iter_mut().enumerate().take(center + 1).skip(left) {
                *v = (k - left) as f64 / (center - left) as f64;
            }
            for (k, v) in row.iter_mut().enumerate().take(right + 1).skip(center) {
                *v = (right - k) as f64 / (right - center) as f64;
            }
        }
        Ok(Self { n_filters, n_bins, weights })
    }

    pub fn n_filters(&self) -> usize {
        self.n_filters
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    /// Builds a bank from explicit rows (used for custom/indicator filters).
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_bins = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != n_bins) {
            return Err(Error::InvalidConfig("filter rows differ in length".into()));
        }
        Ok(Self { n_filters: rows.len(), n_bins, weights: rows.concat() })
    }
}

/// `e[i] = ln(max(filters[i] . P, LOG_FLOOR))`.
pub fn log_mel_energies(power: &[f64], filters: &MelFilterbank) -> Result<Vec<f64>> {
    if power.len() != filters.n_bins {
        return Err(Error::ShapeMismatch {
            op: "log_mel_energies",
            expected: vec![filters.n_bins],
            found: vec![power.len()],
        });
    }
    Ok((0..filters.n_filters)
        .map(|m| {
            let e: f64 = filters.row(m).iter().zip(power).map(|(w, p)| w * p).sum();
            Float::ln(Float::max(e, LOG_FLOOR))
        })
        .collect())
}

fn dct_scale(k: usize, n: usize) -> f64 {
    if k == 0 {
        Float::sqrt(1.0 / n as f64)
    } else {
        Float::sqrt(2.0 / n as f64)
    }
}

/// Orthonormal DCT-II, first `n_out` coefficients (capped at `e.len()`).
pub fn dct_ii(e: &[f64], n_out: usize) -> Vec<f64> {
    let n = e.len();
    (0..n_out.min(n))
        .map(|k| {
            let s: f64 = e
                .iter()
                .enumerate()
                .map(|(j, v)| v * Float::cos(PI * k as f64 * (2 * j + 1) as f64 / (2 * n) as f64))
                .sum();
            dct_scale(k, n) * s
        })
        .collect()
}

/// Linear-interpolation resampler. Output length is
/// `max(1, round(len * to / from))`.
pub fn resample_linear(x: &[f64], from_hz: u32, to_hz: u32) -> Vec<f64> {
    if from_hz == to_hz || x.is_empty() {
        return x.to_vec();
    }
    let ratio = from_hz as f64 / to_hz as f64;
    let out_len = Float::max(Float::round(x.len() as f64 / ratio), 1.0) as usize;
    let last = x.len() - 1;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let j = (Float::floor(pos) as usize).min(last);
            let frac = pos - j as f64;
            let next = x[(j + 1).min(last)];
            x[j] * (1.0 - frac) + next * frac
        })
        .collect()
}

/// Reusable extractor holding the FFT plan, filterbank and DCT basis for one
/// configuration.
#[derive(Debug, Clone)]
pub struct MfccExtractor {
    cfg: MfccConfig,
    plan: FftPlan,
    filters: MelFilterbank,
    window: Vec<f64>,
    dct: Vec<f64>,
    pad_column: Vec<f64>,
}

impl MfccExtractor {
    pub fn new(cfg: MfccConfig) -> Result<Self> {
        cfg.validate()?;
        let plan = FftPlan::new(cfg.n_fft)?;
        let filters = MelFilterbank::new(
            cfg.n_mel_filters,
            cfg.n_fft,
            cfg.target_sample_rate_hz as f64,
            cfg.fmin_hz,
            cfg.fmax_hz,
        )?;
        let n = cfg.n_mel_filters;
        let mut dct = vec![0.0; cfg.n_coefficients * n];
        for k in 0..cfg.n_coefficients {
            for j in 0..n {
                dct[k * n + j] =
                    dct_scale(k, n) * Float::cos(PI * k as f64 * (2 * j + 1) as f64 / (2 * n) as f64);
            }
        }
        let pad_column = dct_ii(&vec![Float::ln(LOG_FLOOR); n], cfg.n_coefficients);
        Ok(Self { cfg, plan, filters, window: hamming(cfg.frame_len_samples()), dct, pad_column })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filters
    }

    /// The column used to pad short clips: the MFCC of a silent frame.
    pub fn pad_column(&self) -> &[f64] {
        &self.pad_column
    }

    fn frame_mfcc(&self, signal: &[f64], start: usize, frame: &mut [f64], out: &mut [f64]) -> Result<()> {
        for (k, (f, w)) in frame.iter_mut().zip(&self.window).enumerate() {
            *f = signal.get(start + k).copied().unwrap_or(0.0) * w;
        }
        let power = self.plan.power_spectrum(frame)?;
        let energies = log_mel_energies(&power, &self.filters)?;
        let n = energies.len();
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.dct[k * n..(k + 1) * n].iter().zip(&energies).map(|(a, b)| a * b).sum();
        }
        Ok(())
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<FeatureMatrix> {
        let samples = clip.samples();
        if samples.is_empty() {
            return Err(Error::EmptyAudio);
        }
        let cfg = &self.cfg;
        let resampled = resample_linear(samples, clip.sample_rate_hz(), cfg.target_sample_rate_hz);
        let emphasized = pre_emphasis(&resampled, cfg.pre_emphasis_alpha);
        let (flen, hop) = (cfg.frame_len_samples(), cfg.hop_samples());
        let raw_frames = frame_count(emphasized.len(), flen, hop);
        let (rows, cols) = (cfg.n_coefficients, cfg.target_frames);
        let mut values = vec![0.0; rows * cols];
        let mut frame = vec![0.0; flen];
        let mut column = vec![0.0; rows];
        for c in 0..cols {
            if c < raw_frames {
                self.frame_mfcc(&emphasized, c * hop, &mut frame, &mut column)?;
            } else {
                column.copy_from_slice(&self.pad_column);
            }
            for (r, v) in column.iter().enumerate() {
                values[r * cols + c] = *v;
            }
        }
        FeatureMatrix::new(rows, cols, values, cfg.fingerprint())
    }
}

/// Full chain: resample, pre-emphasis, framing, power spectrum, mel
/// filterbank, log and DCT, then pad/truncate to `target_frames` columns.
pub fn extract_mfcc(clip: &AudioClip, cfg: &MfccConfig) -> Result<FeatureMatrix> {
    MfccExtractor::new(*cfg)?.extract(clip)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pre_emphasis_cases() {
        let y = pre_emphasis(&[1.0, 1.0, 1.0], 0.97);
        assert_eq!(y[0], 1.0);
        assert!((y[1] - 0.03).abs() < 1e-15 && (y[2] - 0.03).abs() < 1e-15);
        assert_eq!(pre_emphasis(&[0.3, -0.2], 0.0), vec![0.3, -0.2]);
        assert!(pre_emphasis(&[], 0.5).is_empty());
    }

    #[test]
    fn framing_counts() {
        assert_eq!(frame_count(400, 400, 160), 1);
        assert_eq!(frame_count(720, 400, 160), 3);
        assert_eq!(frame_count(10, 400, 160), 1);
        assert_eq!(frame_and_window(&[0.0; 720], 400, 160).len(), 3);
        let short = frame_and_window(&[1.0; 3], 5, 2);
        assert_eq!(short.len(), 1);
        assert_eq!(short[0][3], 0.0);
    }

    #[test]
    fn hamming_five() {
        let f = frame_and_window(&[1.0; 5], 5, 1);
        let expected = [0.08, 0.54, 1.0, 0.54, 0.08];
        for (a, b) in f[0].iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mel_scale_points() {
        assert_eq!(hz_to_mel(0.0), 0.0);
        assert!((hz_to_mel(700.0) - 2595.0 * core::f64::consts::LOG10_2).abs() < 1e-12);
        assert!((hz_to_mel(700.0) - 781.17).abs() < 5e-3);
        for hz in [0.0, 20.0, 440.0, 2000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
    }

    #[test]
    fn filters_are_unit_triangles() {
        let fb = MelFilterbank::new(26, 512, 4000.0, 20.0, 2000.0).unwrap();
        for m in 0..fb.n_filters() {
            let row = fb.row(m);
            assert!(row.iter().all(|&w| w >= 0.0));
            let peak = row.iter().cloned().fold(0.0, f64::max);
            assert_eq!(peak, 1.0);
            let p = row.iter().position(|&w| w == 1.0).unwrap();
            assert!(row[..p].windows(2).all(|w| w[0] <= w[1]));
            assert!(row[p..].windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn degenerate_filters_error() {
        assert!(matches!(MelFilterbank::new(200, 64, 4000.0, 20.0, 2000.0), Err(Error::DegenerateFilter { .. })));
    }

    #[test]
    fn log_energy_floor_and_indicator() {
        let fb = MelFilterbank::new(4, 64, 4000.0, 20.0, 2000.0).unwrap();
        let e = log_mel_energies(&[0.0; 33], &fb).unwrap();
        assert!(e.iter().all(|&v| v == Float::ln(LOG_FLOOR)));
        let mut ind = vec![0.0; 33];
        ind[7] = 1.0;
        let single = MelFilterbank::from_rows(vec![ind]).unwrap();
        let mut p = vec![0.0; 33];
        p[7] = core::f64::consts::E;
        assert!((log_mel_energies(&p, &single).unwrap()[0] - 1.0).abs() < 1e-15);
        assert!(log_mel_energies(&[0.0; 5], &fb).is_err());
    }

    #[test]
    fn dct_cases() {
        let c = dct_ii(&[2.0; 9], 9);
        assert!((c[0] - 2.0 * 3.0).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
        let c = dct_ii(&[1.0, -1.0], 2);
        assert!(c[0].abs() < 1e-15);
        assert!((c[1] - core::f64::consts::SQRT_2).abs() < 1e-12);
        assert_eq!(dct_ii(&[1.0, 2.0], 5).len(), 2);
    }

    #[test]
    fn config_validation() {
        assert!(MfccConfig::default().validate().is_ok());
        let c = MfccConfig { n_fft: 500, ..MfccConfig::default() };
        assert_eq!(c.validate(), Err(Error::BadFftSize(500)));
        let c = MfccConfig { n_coefficients: 30, ..MfccConfig::default() };
        assert!(c.validate().is_err());
        let c = MfccConfig { fmax_hz: 2500.0, ..MfccConfig::default() };
        assert!(c.validate().is_err());
        let c = MfccConfig { pre_emphasis_alpha: 1.0, ..MfccConfig::default() };
        assert!(c.validate().is_err());
        assert_ne!(MfccConfig::default().fingerprint(), c.fingerprint());
    }

    #[test]
    fn silence_gives_constant_columns() {
        let cfg = MfccConfig::default();
        let clip = AudioClip::new(vec![0.0; 4000], 4000, 1, "s").unwrap();
        let m = extract_mfcc(&clip, &cfg).unwrap();
        assert_eq!((m.rows(), m.cols()), (20, 498));
        let pad = dct_ii(&vec![Float::ln(LOG_FLOOR); 26], 20);
        for c in 0..m.cols() {
            for (r, p) in pad.iter().enumerate() {
                assert!((m.get(r, c) - p).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ten_second_frame_count() {
        let cfg = MfccConfig::default();
        assert_eq!(frame_count(40_000, cfg.frame_len_samples(), cfg.hop_samples()), 998);
    }

    #[test]
    fn resample_lengths() {
        let x: Vec<f64> = (0..8000).map(|i| i as f64).collect();
        let y = resample_linear(&x, 8000, 4000);
        assert_eq!(y.len(), 4000);
        assert_eq!(y[10], 20.0);
        let z = resample_linear(&[0.0, 1.0], 1000, 2000);
        assert_eq!(z, vec![0.0, 0.5, 1.0, 1.0]);
    }
}
