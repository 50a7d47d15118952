use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Add, Mul, Sub};

use num_traits::Float;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }
}

impl Add for Complex {
    type Output = Complex;
    fn add(self, o: Complex) -> Complex {
        Complex::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for Complex {
    type Output = Complex;
    fn sub(self, o: Complex) -> Complex {
        Complex::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for Complex {
    type Output = Complex;
    fn mul(self, o: Complex) -> Complex {
        Complex::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
}

/// Precomputed twiddles and bit-reversal table for one transform size.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    twiddles: Vec<Complex>,
    rev: Vec<usize>,
}

impl FftPlan {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::BadFftSize(n));
        }
        let bits = n.trailing_zeros();
        let rev = (0..n)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        let twiddles = (0..n / 2)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / n as f64;
                Complex::new(Float::cos(a), Float::sin(a))
            })
            .collect();
        Ok(Self { n, twiddles, rev })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Forward DFT, X[k] = sum_t x[t] exp(-2 pi i k t / n), in place.
    pub fn forward(&self, buf: &mut [Complex]) -> Result<()> {
        if buf.len() != self.n {
            return Err(Error::ShapeMismatch { op: "fft", expected: vec![self.n], found: vec![buf.len()] });
        }
        for i in 0..self.n {
            let j = self.rev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= self.n {
            let half = len / 2;
            let stride = self.n / len;
            for chunk in buf.chunks_exact_mut(len) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let a = chunk[k];
                    let b = chunk[k + half] * w;
                    chunk[k] = a + b;
                    chunk[k + half] = a - b;
                }
            }
            len <<= 1;
        }
        Ok(())
    }

    /// One-sided power spectrum `|X[k]|^2 / n` for k in 0..=n/2; the frame is
    /// zero-padded to n.
    pub fn power_spectrum(&self, frame: &[f64]) -> Result<Vec<f64>> {
        if frame.len() > self.n {
            return Err(Error::InvalidConfig(alloc::format!(
                "frame of {} samples exceeds n_fft {}",
                frame.len(),
                self.n
            )));
        }
        let mut buf = vec![Complex::default(); self.n];
        for (b, &x) in buf.iter_mut().zip(frame) {
            b.re = x;
        }
        self.forward(&mut buf)?;
        let scale = 1.0 / self.n as f64;
        Ok(buf[..=self.n / 2].iter().map(|c| c.norm_sqr() * scale).collect())
    }
}

pub fn fft_in_place(buf: &mut [Complex]) -> Result<()> {
    FftPlan::new(buf.len())?.forward(buf)
}

pub fn power_spectrum(frame: &[f64], n_fft: usize) -> Result<Vec<f64>> {
    FftPlan::new(n_fft)?.power_spectrum(frame)
}
