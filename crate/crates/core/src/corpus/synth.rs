use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AudioClip, DemographicRecord, DiseaseLabel, Gender, SoundLabel};
use crate::error::Result;

/// Generator settings for a desk-scale stand-in corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub n_per_class: usize,
    pub seed: u64,
    pub sample_rate_hz: u32,
    pub duration_s: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self { n_per_class: 40, seed: 42, sample_rate_hz: 4000, duration_s: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthClip {
    pub clip: AudioClip,
    pub sound: SoundLabel,
    pub disease: DiseaseLabel,
    /// Background level: 0 = quiet, 1 = loud.
    pub variant: u8,
}

/// Background RMS for variant 0 (quiet) and 1 (loud).
const BASE_RMS: [f64; 2] = [0.02, 0.045];
const WHEEZE_AMPLITUDE: f64 = 0.15;
const WHEEZE_BAND_HZ: (f64, f64) = (350.0, 450.0);
const CRACKLE_LEN_S: f64 = 0.005;
const CRACKLE_TAU_S: f64 = 0.00125;

/// Disease for a (sound class, background variant) pair. Every disease
/// appears, so the disease head has something audible to learn.
pub fn synth_disease(sound: SoundLabel, variant: u8) -> DiseaseLabel {
    use DiseaseLabel::*;
    match (sound, variant) {
        (SoundLabel::Crackles, 0) => Pneumonia,
        (SoundLabel::Crackles, _) => Bronchiectasis,
        (SoundLabel::Wheezes, 0) => Copd,
        (SoundLabel::Wheezes, _) => Bronchiolitis,
        (SoundLabel::Both, 0) => Copd,
        (SoundLabel::Both, _) => Urti,
        (SoundLabel::Healthy, 0) => Healthy,
        (SoundLabel::Healthy, _) => Urti,
    }
}

fn white(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(-1.0..1.0)
}

/// Kellet's economy pink filter over uniform white noise.
fn pink_noise(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    (0..n)
        .map(|_| {
            let w = white(rng);
            b[0] = 0.99886 * b[0] + w * 0.0555179;
            b[1] = 0.99332 * b[1] + w * 0.0750759;
            b[2] = 0.96900 * b[2] + w * 0.1538520;
            b[3] = 0.86650 * b[3] + w * 0.3104856;
            b[4] = 0.55000 * b[4] + w * 0.5329522;
            b[5] = -0.7616 * b[5] - w * 0.0168980;
            let out = b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + w * 0.5362;
            b[6] = w * 0.115926;
            out
        })
        .collect()
}

fn normalize_rms(x: &mut [f64], target: f64) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    let rms = Float::sqrt(x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64);
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v *= target / rms);
    }
}

fn add_crackles(x: &mut [f64], sr: f64, rng: &mut ChaCha8Rng) {
    let rate_hz: f64 = rng.gen_range(10.0..20.0);
    let len = Float::max(Float::round(CRACKLE_LEN_S * sr), 1.0) as usize;
    let duration = x.len() as f64 / sr;
    // Poisson arrivals via exponential gaps
    let mut t = 0.0;
    loop {
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        t += -Float::ln(u) / rate_hz;
        if t >= duration {
            break;
        }
        let start = (t * sr) as usize;
        let amp = rng.gen_range(0.4..0.8) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let freq: f64 = rng.gen_range(300.0..Float::min(1200.0, 0.45 * sr));
        for k in 0..len {
            let Some(s) = x.get_mut(start + k) else { break };
            let tk = k as f64 / sr;
            *s += amp * Float::exp(-tk / CRACKLE_TAU_S) * Float::cos(2.0 * PI * freq * tk);
        }
    }
}

fn add_wheeze(x: &mut [f64], sr: f64, rng: &mut ChaCha8Rng) {
    let f0: f64 = rng.gen_range(WHEEZE_BAND_HZ.0..WHEEZE_BAND_HZ.1);
    let fm: f64 = rng.gen_range(0.25..0.6);
    let phase_m: f64 = rng.gen_range(0.0..2.0 * PI);
    let phase: f64 = rng.gen_range(0.0..2.0 * PI);
    for (i, s) in x.iter_mut().enumerate() {
        let t = i as f64 / sr;
        let env = 0.5 * (1.0 + Float::sin(2.0 * PI * fm * t + phase_m));
        *s += WHEEZE_AMPLITUDE * env * Float::sin(2.0 * PI * f0 * t + phase);
    }
}

/// Generates `n_per_class` clips per sound class, in class order.
///
/// Healthy clips are background only; Crackles add Poisson-placed 5 ms
/// exponentially decaying bursts; Wheezes add an amplitude-modulated tone
/// in 350-450 Hz; Both add both. The background is pink noise whose level
/// alternates between two settings within a class; the level selects the
/// disease via [`synth_disease`].
pub fn synth_corpus(params: &SynthParams) -> Result<Vec<SynthClip>> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let sr = params.sample_rate_hz as f64;
    let n = Float::max(Float::round(params.duration_s * sr), 1.0) as usize;
    let mut out = Vec::with_capacity(4 * params.n_per_class);
    for sound in SoundLabel::ALL {
        for i in 0..params.n_per_class {
            let variant = (i % 2) as u8;
            let mut x = pink_noise(n, &mut rng);
            normalize_rms(&mut x, BASE_RMS[variant as usize]);
            let (crackle, wheeze) = sound.flags();
            if crackle {
                add_crackles(&mut x, sr, &mut rng);
            }
            if wheeze {
                add_wheeze(&mut x, sr, &mut rng);
            }
            let peak = x.iter().fold(0.0f64, |m, v| Float::max(m, Float::abs(*v)));
            if peak > 0.99 {
                x.iter_mut().for_each(|v| *v *= 0.99 / peak);
            }
            let patient_id = 1000 + out.len() as u32;
            let recording_id = format!("{patient_id}_1b1_Tc_sc_Synth");
            let clip = AudioClip::new(x, params.sample_rate_hz, patient_id, recording_id)?;
            out.push(SynthClip { clip, sound, disease: synth_disease(sound, variant), variant });
        }
    }
    Ok(out)
}

/// Demographics with age uniform in [35, 90), BMI uniform in [15, 40) and
/// a fair coin for gender; patient ids run from 1.
pub fn synth_demographics(n: usize, seed: u64) -> Vec<DemographicRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let age = rng.gen_range(35.0..90.0);
            let gender = if rng.gen_bool(0.5) { Gender::Male } else { Gender::Female };
            let bmi = rng.gen_range(15.0..40.0);
            DemographicRecord { patient_id: i as u32 + 1, age_years: age, gender, bmi_kg_m2: bmi }
        })
        .collect()
}
