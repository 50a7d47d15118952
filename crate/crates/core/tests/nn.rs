//! Forward-pass oracles for the tensor operations.

#![allow(clippy::needless_range_loop)]

use lungmtl_core::nn::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Direct six-loop cross-correlation with zero padding.
fn naive_conv(x: &Tensor<f64>, k: &Tensor<f64>, b: &[f64], stride: usize, pad: usize) -> Tensor<f64> {
    let (n, c, h, w) = x.dims4("x").unwrap();
    let (f, _, kh, kw) = k.dims4("k").unwrap();
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = Tensor::zeros(&[n, f, oh, ow]);
    for ni in 0..n {
        for fi in 0..f {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = b[fi];
                    for ci in 0..c {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let (iy, ix) = ((oy * stride + dy) as isize - pad as isize, (ox * stride + dx) as isize - pad as isize);
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    let xv = x.data()[((ni * c + ci) * h + iy as usize) * w + ix as usize];
                                    s += xv * k.data()[((fi * c + ci) * kh + dy) * kw + dx];
                                }
                            }
                        }
                    }
                    out.data_mut()[((ni * f + fi) * oh + oy) * ow + ox] = s;
                }
            }
        }
    }
    out
}

fn assert_close(a: &Tensor<f64>, b: &Tensor<f64>, tol: f64) {
    assert_eq!(a.shape(), b.shape());
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() < tol, "{x} vs {y}");
    }
}

#[test]
fn conv_matches_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&[2, 3, 8, 8], &mut rng);
    let k = random(&[4, 3, 3, 3], &mut rng);
    let b = random(&[4], &mut rng);
    for (stride, pad) in [(1, 0), (1, 1), (2, 1), (2, 0)] {
        let got = conv2d_forward(&x, &k, &b, stride, pad).unwrap();
        assert_close(&got, &naive_conv(&x, &k, b.data(), stride, pad), 1e-10);
    }
}

#[test]
fn depthwise_is_block_diagonal_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (c, stride) in [(3, 1), (5, 2), (1, 1)] {
        let x = random(&[2, c, 7, 9], &mut rng);
        let k = random(&[c, 3, 3], &mut rng);
        let mut full = Tensor::zeros(&[c, c, 3, 3]);
        for ci in 0..c {
            full.data_mut()[(ci * c + ci) * 9..(ci * c + ci) * 9 + 9].copy_from_slice(&k.data()[ci * 9..ci * 9 + 9]);
        }
        let got = depthwise_conv2d_forward(&x, &k, stride, 1).unwrap();
        let want = conv2d_forward(&x, &full, &Tensor::zeros(&[c]), stride, 1).unwrap();
        assert_close(&got, &want, 1e-10);
    }
}

#[test]
fn pointwise_is_one_by_one_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&[3, 4, 5, 6], &mut rng);
    let k = random(&[7, 4], &mut rng);
    let k4 = Tensor::from_vec(&[7, 4, 1, 1], k.data().to_vec()).unwrap();
    let got = pointwise_conv2d_forward(&x, &k).unwrap();
    assert_close(&got, &conv2d_forward(&x, &k4, &Tensor::zeros(&[7]), 1, 0).unwrap(), 1e-12);
}

#[test]
fn batch_norm_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (n, c, h, w) = (4, 3, 5, 5);
    let mut x = random(&[n, c, h, w], &mut rng);
    x.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = *v * 3.0 + (i / (h * w) % c) as f64 * 10.0);
    let mut stats = RunningStats::new(c, 0.9);
    let y = batchnorm_forward(&x, &Tensor::full(&[c], 1.0), &Tensor::zeros(&[c]), 1e-5, Mode::Train, &mut stats).unwrap();
    for ci in 0..c {
        let vals: Vec<f64> =
            (0..n).flat_map(|ni| y.data()[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w].to_vec()).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / vals.len() as f64;
        assert!(m.abs() < 1e-7);
        assert!((v - 1.0).abs() < 1e-5);
    }
}

#[test]
fn softmax_rows_are_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data: Vec<f64> = (0..1000 * 6).map(|_| rng.gen_range(-1e4..1e4)).collect();
    let p = softmax(&Tensor::from_vec(&[1000, 6], data).unwrap()).unwrap();
    for row in p.data().chunks(6) {
        assert!(row.iter().all(|&v| v >= 0.0 && v.is_finite()));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn adam_trajectories_are_reproducible() {
    let run = || {
        let mut p = Param::new(Tensor::from_vec(&[2], vec![1.0f64, 1.0]).unwrap(), true);
        let mut opt = AdamState::new(AdamConfig::default());
        for _ in 0..50 {
            p.grad = Tensor::from_vec(&[2], p.value.data().iter().map(|w| 2.0 * w).collect()).unwrap();
            opt.step(&mut [&mut p]).unwrap();
        }
        p.value
    };
    assert_eq!(run(), run());
}
