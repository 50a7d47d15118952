use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{check_rows, check_xy, Standardizer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub c: f64,
    /// `None` resolves to `1 / D`.
    pub gamma: Option<f64>,
    /// Stopping gap between the maximal violating pair.
    pub eps: f64,
    pub max_iter: usize,
    /// z-score features with training statistics before the kernel.
    pub standardize: bool,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { c: 1.0, gamma: None, eps: 1e-3, max_iter: 1_000_000, standardize: true }
    }
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Float::exp(-gamma * d2)
}

fn gram(x: &[Vec<f64>], gamma: f64) -> Vec<f64> {
    let n = x.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        for j in 0..i {
            let v = rbf(&x[i], &x[j], gamma);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

/// One `+1` vs `-1` machine: `f(x) = sum coef_i k(sv_i, x) - rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub support: Vec<Vec<f64>>,
    /// `alpha_i * y_i` for each support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
}

impl BinarySvm {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.support.iter().zip(&self.coef).map(|(s, c)| c * rbf(s, row, self.gamma)).sum::<f64>() - self.rho
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvmFit {
    pub machine: BinarySvm,
    /// Dual variables for every training row.
    pub alpha: Vec<f64>,
    pub iterations: usize,
    pub max_kkt_residual: f64,
    pub dual_objective: f64,
}

/// `sum alpha - 1/2 sum_ij alpha_i alpha_j y_i y_j k(x_i, x_j)`.
pub fn dual_objective(x: &[Vec<f64>], y: &[f64], alpha: &[f64], gamma: f64) -> f64 {
    let mut quad = 0.0;
    for i in 0..x.len() {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..x.len() {
            if alpha[j] != 0.0 {
                quad += alpha[i] * alpha[j] * y[i] * y[j] * rbf(&x[i], &x[j], gamma);
            }
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Per-row KKT violation of `(alpha, rho)`: `alpha = 0` needs `y f >= 1`,
/// free rows need `y f = 1`, `alpha = C` needs `y f <= 1`.
pub fn kkt_residuals(x: &[Vec<f64>], y: &[f64], alpha: &[f64], rho: f64, gamma: f64, c: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let f: f64 = (0..x.len()).map(|j| alpha[j] * y[j] * rbf(&x[j], &x[i], gamma)).sum::<f64>() - rho;
            let m = y[i] * f;
            if alpha[i] <= 0.0 {
                (1.0 - m).max(0.0)
            } else if alpha[i] >= c {
                (m - 1.0).max(0.0)
            } else {
                Float::abs(m - 1.0)
            }
        })
        .collect()
}

/// SMO with maximal-violating-pair selection on the dual
/// `min 1/2 a^T Q a - e^T a`, `0 <= a <= C`, `y^T a = 0`.
pub fn fit_binary_svm(x: &[Vec<f64>], y: &[f64], c: f64, gamma: f64, eps: f64, max_iter: usize) -> Result<BinarySvmFit> {
    let n = x.len();
    if n == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if !(c > 0.0 && gamma > 0.0 && eps > 0.0) {
        return Err(Error::InvalidConfig("svm needs C, gamma, eps > 0".into()));
    }
    if y.len() != n || y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidConfig("svm labels must be +1/-1".into()));
    }
    let k = gram(x, gamma);
    let mut alpha = vec![0.0; n];
    let mut g = vec![-1.0; n];
    let mut iterations = 0;
    let up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);
    loop {
        let (mut gmax, mut gmin) = (f64::NEG_INFINITY, f64::INFINITY);
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for t in 0..n {
            let v = -y[t] * g[t];
            if up(alpha[t], y[t]) && v >= gmax {
                gmax = v;
                i = t;
            }
            if low(alpha[t], y[t]) && v <= gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < eps {
            break;
        }
        if iterations >= max_iter {
            let rho = compute_rho(&alpha, &g, y, c);
            let res = kkt_residuals(x, y, &alpha, rho, gamma, c);
            return Err(Error::NoConvergence { iterations, max_residual: res.iter().copied().fold(0.0, f64::max) });
        }
        iterations += 1;
        let (ai, aj) = (alpha[i], alpha[j]);
        let kij = k[i * n + j];
        let quad = (k[i * n + i] + k[j * n + j] - 2.0 * kij).max(1e-12);
        if y[i] != y[j] {
            let delta = (-g[i] - g[j]) / quad;
            let diff = ai - aj;
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (g[i] - g[j]) / quad;
            let sum = ai + aj;
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            g[t] += y[t] * (y[i] * k[t * n + i] * di + y[j] * k[t * n + j] * dj);
        }
    }
    let rho = compute_rho(&alpha, &g, y, c);
    let res = kkt_residuals(x, y, &alpha, rho, gamma, c);
    let mut support = Vec::new();
    let mut coef = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support.push(x[t].clone());
            coef.push(alpha[t] * y[t]);
        }
    }
    Ok(BinarySvmFit {
        dual_objective: dual_objective(x, y, &alpha, gamma),
        machine: BinarySvm { support, coef, rho, gamma },
        alpha,
        iterations,
        max_kkt_residual: res.iter().copied().fold(0.0, f64::max),
    })
}

fn compute_rho(alpha: &[f64], g: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut free) = (0.0, 0usize);
    for t in 0..alpha.len() {
        let yg = y[t] * g[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            sum += yg;
            free += 1;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// One-vs-rest RBF machines; a class without positives or negatives in the
/// training data gets no machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfSvmModel {
    pub scaler: Option<Standardizer>,
    pub machines: Vec<Option<BinarySvm>>,
    pub classes: usize,
    pub features: usize,
    /// Set when training saw a single class.
    pub constant: Option<usize>,
    pub max_kkt_residual: f64,
    pub iterations: usize,
    pub config: SvmConfig,
}

pub fn fit_rbf_svm(x: &[Vec<f64>], y: &[usize], k: usize, cfg: &SvmConfig) -> Result<RbfSvmModel> {
    let d = check_xy(x, y, k)?;
    let gamma = cfg.gamma.unwrap_or(1.0 / d as f64);
    let scaler = cfg.standardize.then(|| Standardizer::fit(x));
    let xs: Vec<Vec<f64>> = match &scaler {
        Some(s) => x.iter().map(|r| s.apply(r)).collect(),
        None => x.to_vec(),
    };
    let present: Vec<usize> = (0..k).filter(|c| y.contains(c)).collect();
    let constant = (present.len() == 1).then(|| present[0]);
    let mut machines = Vec::with_capacity(k);
    let (mut worst, mut iterations) = (0.0f64, 0);
    for c in 0..k {
        if constant.is_some() || !present.contains(&c) {
            machines.push(None);
            continue;
        }
        let yc: Vec<f64> = y.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
        let fit = fit_binary_svm(&xs, &yc, cfg.c, gamma, cfg.eps, cfg.max_iter)?;
        worst = worst.max(fit.max_kkt_residual);
        iterations += fit.iterations;
        machines.push(Some(fit.machine));
    }
    Ok(RbfSvmModel { scaler, machines, classes: k, features: d, constant, max_kkt_residual: worst, iterations, config: *cfg })
}

impl RbfSvmModel {
    /// Class with the largest one-vs-rest decision value.
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<usize>> {
        if self.constant.is_none() && self.machines.iter().all(Option::is_none) {
            return Err(Error::UnfittedModel);
        }
        check_rows(x, self.features)?;
        Ok(x
            .iter()
            .map(|row| {
                if let Some(c) = self.constant {
                    return c;
                }
                let r = match &self.scaler {
                    Some(s) => s.apply(row),
                    None => row.clone(),
                };
                let mut best = (0, f64::NEG_INFINITY);
                for (c, m) in self.machines.iter().enumerate() {
                    if let Some(m) = m {
                        let v = m.decision(&r);
                        if v > best.1 {
                            best = (c, v);
                        }
                    }
                }
                best.0
            })
            .collect())
    }
}
