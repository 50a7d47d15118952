use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{check_rows, check_xy, Standardizer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoftmaxConfig {
    pub lr: f64,
    pub max_iter: usize,
    /// Stop once the largest gradient entry falls below this.
    pub tol: f64,
}

impl Default for SoftmaxConfig {
    fn default() -> Self {
        Self { lr: 1e-2, max_iter: 1000, tol: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxRegressionModel {
    pub scaler: Standardizer,
    /// `classes x (features + 1)`, row-major, bias in the last column.
    pub weights: Vec<f64>,
    pub classes: usize,
    pub features: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Mean cross-entropy before each update.
    pub loss_history: Vec<f64>,
}

fn class_probs(w: &[f64], row: &[f64], k: usize) -> Vec<f64> {
    let d1 = row.len() + 1;
    let mut z: Vec<f64> = (0..k)
        .map(|c| {
            let wc = &w[c * d1..(c + 1) * d1];
            wc[..d1 - 1].iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + wc[d1 - 1]
        })
        .collect();
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    z.iter_mut().for_each(|v| *v = Float::exp(*v - m));
    let s: f64 = z.iter().sum();
    z.iter_mut().for_each(|v| *v /= s);
    z
}

/// Mean multinomial cross-entropy of `w` on standardized rows and its
/// gradient `(1/N) sum (p - onehot) [x, 1]^T`.
pub fn softmax_loss_grad(w: &[f64], xs: &[Vec<f64>], y: &[usize], k: usize) -> (f64, Vec<f64>) {
    let d1 = xs[0].len() + 1;
    let n = xs.len() as f64;
    let mut grad = vec![0.0; k * d1];
    let mut loss = 0.0;
    for (row, &t) in xs.iter().zip(y) {
        let p = class_probs(w, row, k);
        loss -= Float::ln(p[t] + 1e-300);
        for c in 0..k {
            let e = p[c] - if c == t { 1.0 } else { 0.0 };
            let g = &mut grad[c * d1..(c + 1) * d1];
            g[..d1 - 1].iter_mut().zip(row).for_each(|(gi, xi)| *gi += e * xi);
            g[d1 - 1] += e;
        }
    }
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad)
}

/// Full-batch gradient descent from zero weights on z-scored features.
pub fn fit_softmax_regression(x: &[Vec<f64>], y: &[usize], k: usize, cfg: &SoftmaxConfig) -> Result<SoftmaxRegressionModel> {
    let d = check_xy(x, y, k)?;
    if cfg.lr.is_nan() || cfg.lr <= 0.0 || cfg.max_iter == 0 {
        return Err(Error::InvalidConfig("softmax regression needs lr > 0 and max_iter >= 1".into()));
    }
    let scaler = Standardizer::fit(x);
    let xs: Vec<Vec<f64>> = x.iter().map(|r| scaler.apply(r)).collect();
    let mut w = vec![0.0; k * (d + 1)];
    let mut loss_history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let (loss, grad) = softmax_loss_grad(&w, &xs, y, k);
        loss_history.push(loss);
        if grad.iter().fold(0.0f64, |m, g| m.max(Float::abs(*g))) < cfg.tol {
            converged = true;
            break;
        }
        w.iter_mut().zip(&grad).for_each(|(wi, g)| *wi -= cfg.lr * g);
        iterations += 1;
    }
    Ok(SoftmaxRegressionModel { scaler, weights: w, classes: k, features: d, iterations, converged, loss_history })
}

impl SoftmaxRegressionModel {
    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if self.weights.len() != self.classes * (self.features + 1) || self.classes == 0 {
            return Err(Error::UnfittedModel);
        }
        check_rows(x, self.features)?;
        Ok(x.iter().map(|r| class_probs(&self.weights, &self.scaler.apply(r), self.classes)).collect())
    }

    /// Argmax class; ties go to the lower index.
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<usize>> {
        Ok(self
            .predict_proba(x)?
            .iter()
            .map(|p| {
                let mut best = 0;
                for (i, &v) in p.iter().enumerate() {
                    if v > p[best] {
                        best = i;
                    }
                }
                best
            })
            .collect())
    }
}
