use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{Param, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates, one buffer per parameter tensor in the
/// order the parameters are presented to [`AdamState::step`].
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub cfg: AdamConfig,
    pub t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

/// One bias-corrected Adam update of a flat parameter buffer.
pub fn adam_update<T: Real>(param: &mut [T], grad: &[T], m: &mut [T], v: &mut [T], cfg: &AdamConfig, t: u64) {
    let (b1, b2) = (T::cast(cfg.beta1), T::cast(cfg.beta2));
    let c1 = T::cast(1.0 - Float::powi(cfg.beta1, t as i32));
    let c2 = T::cast(1.0 - Float::powi(cfg.beta2, t as i32));
    let (lr, eps) = (T::cast(cfg.lr), T::cast(cfg.eps));
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (T::one() - b1) * g;
        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
        let mhat = m[i] / c1;
        let vhat = v[i] / c2;
        param[i] -= lr * mhat / (vhat.sqrt() + eps);
    }
}

impl<T: Real> AdamState<T> {
    pub fn new(cfg: AdamConfig) -> Self {
        Self { cfg, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn step(&mut self, params: &mut [&mut Param<T>]) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::ShapeMismatch { op: "adam", expected: vec![self.m.len()], found: vec![params.len()] });
        }
        for (i, p) in params.iter().enumerate() {
            if p.value.len() != self.m[i].len() || p.grad.len() != p.value.len() {
                return Err(Error::ShapeMismatch {
                    op: "adam",
                    expected: vec![self.m[i].len()],
                    found: vec![p.value.len()],
                });
            }
        }
        self.t += 1;
        for (i, p) in params.iter_mut().enumerate() {
            let Param { value, grad, .. } = &mut **p;
            adam_update(value.data_mut(), grad.data(), &mut self.m[i], &mut self.v[i], &self.cfg, self.t);
        }
        Ok(())
    }
}
