//! Stage-by-stage oracles for the MFCC chain.

use std::f64::consts::PI;

use lungmtl_core::corpus::AudioClip;
use lungmtl_core::dsp::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn naive_power(x: &[f64], n: usize) -> Vec<f64> {
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate().take(n) {
                let a = -2.0 * PI * (k * t) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            (re * re + im * im) / n as f64
        })
        .collect()
}

fn naive_dct(e: &[f64], n_out: usize) -> Vec<f64> {
    let n = e.len();
    (0..n_out.min(n))
        .map(|k| {
            let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            scale * (0..n).map(|j| e[j] * (PI * k as f64 * (2 * j + 1) as f64 / (2 * n) as f64).cos()).sum::<f64>()
        })
        .collect()
}

#[test]
fn pre_emphasis_matches_loop() {
    let x = random(1000, 1);
    let y = pre_emphasis(&x, 0.97);
    for t in 0..x.len() {
        let want = if t == 0 { x[0] } else { x[t] - 0.97 * x[t - 1] };
        assert!((y[t] - want).abs() < 1e-12);
    }
}

#[test]
fn power_spectrum_matches_naive_dft() {
    let x = random(256, 2);
    let fast = power_spectrum(&x, 256).unwrap();
    let slow = naive_power(&x, 256);
    for (a, b) in fast.iter().zip(&slow) {
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn parseval(seed in any::<u64>(), log_n in 1u32..10) {
        let n = 1usize << log_n;
        let x = random(n, seed);
        let p = power_spectrum(&x, n).unwrap();
        let energy: f64 = x.iter().map(|v| v * v).sum();
        let spec = if n == 1 { p[0] } else { p[0] + p[n / 2] + 2.0 * p[1..n / 2].iter().sum::<f64>() };
        prop_assert!((energy - spec).abs() <= 1e-9 * energy.max(1e-12));
    }

    #[test]
    fn dct_is_orthonormal(seed in any::<u64>(), n in 1usize..40) {
        let e = random(n, seed);
        let c = dct_ii(&e, n);
        let back: Vec<f64> = (0..n)
            .map(|j| {
                (0..n)
                    .map(|k| {
                        let s = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
                        s * c[k] * (PI * k as f64 * (2 * j + 1) as f64 / (2 * n) as f64).cos()
                    })
                    .sum()
            })
            .collect();
        for (a, b) in e.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn output_shape_is_fixed(len in 1usize..30_000, seed in any::<u64>()) {
        let clip = AudioClip::new(random(len, seed), 4000, 1, String::from("x")).unwrap();
        let f = extract_mfcc(&clip, &MfccConfig::default()).unwrap();
        prop_assert_eq!((f.rows(), f.cols()), (20, 498));
    }
}

#[test]
fn dct_matches_naive_loop() {
    let e = random(26, 3);
    for (a, b) in dct_ii(&e, 20).iter().zip(naive_dct(&e, 20)) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn log_mel_matches_matrix_product() {
    let fb = MelFilterbank::new(26, 512, 4000.0, 20.0, 2000.0).unwrap();
    let p: Vec<f64> = random(257, 4).iter().map(|v| v.abs()).collect();
    let got = log_mel_energies(&p, &fb).unwrap();
    for (m, g) in got.iter().enumerate() {
        let dot: f64 = fb.row(m).iter().zip(&p).map(|(a, b)| a * b).sum();
        assert!((g - dot.max(LOG_FLOOR).ln()).abs() < 1e-12);
    }
}

/// Independent re-implementation of the whole chain from the stage oracles.
#[test]
fn extraction_is_the_staged_composition() {
    let cfg = MfccConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples: Vec<f64> = (0..8000 * 3).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let clip = AudioClip::new(samples.clone(), 8000, 1, String::from("c")).unwrap();
    let got = extract_mfcc(&clip, &cfg).unwrap();

    let x = pre_emphasis(&resample_linear(&samples, 8000, 4000), cfg.pre_emphasis_alpha);
    let (flen, hop) = (cfg.frame_len_samples(), cfg.hop_samples());
    let window: Vec<f64> = (0..flen).map(|t| 0.54 - 0.46 * (2.0 * PI * t as f64 / (flen - 1) as f64).cos()).collect();
    let fb = MelFilterbank::new(cfg.n_mel_filters, cfg.n_fft, 4000.0, cfg.fmin_hz, cfg.fmax_hz).unwrap();
    let silent = naive_dct(&vec![LOG_FLOOR.ln(); cfg.n_mel_filters], cfg.n_coefficients);
    let frames = if x.len() < flen { 1 } else { 1 + (x.len() - flen) / hop };
    for c in 0..cfg.target_frames {
        let col = if c < frames {
            let frame: Vec<f64> = (0..flen).map(|t| x.get(c * hop + t).copied().unwrap_or(0.0) * window[t]).collect();
            let mut padded = frame.clone();
            padded.resize(cfg.n_fft, 0.0);
            let p = naive_power(&padded, cfg.n_fft);
            let e: Vec<f64> =
                (0..cfg.n_mel_filters).map(|m| fb.row(m).iter().zip(&p).map(|(a, b)| a * b).sum::<f64>().max(LOG_FLOOR).ln()).collect();
            naive_dct(&e, cfg.n_coefficients)
        } else {
            silent.clone()
        };
        for (r, v) in col.iter().enumerate() {
            assert!((got.get(r, c) - v).abs() < 1e-9, "({r},{c}): {} vs {v}", got.get(r, c));
        }
    }
    assert_eq!(got, extract_mfcc(&clip, &cfg).unwrap());
}
