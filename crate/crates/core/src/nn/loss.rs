use alloc::vec;

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Added inside the logarithm of the cross-entropy.
pub const CE_EPSILON: f64 = 1e-12;

/// Row-wise softmax with max subtraction.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, k) = logits.dims2("softmax")?;
    let mut out = logits.clone();
    if k == 0 {
        return Ok(out);
    }
    for row in out.data_mut().chunks_exact_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(out)
}

fn check_targets(n: usize, k: usize, targets: &[usize]) -> Result<()> {
    if targets.len() != n {
        return Err(Error::ShapeMismatch { op: "cross_entropy targets", expected: vec![n], found: vec![targets.len()] });
    }
    match targets.iter().find(|&&t| t >= k) {
        Some(&t) => Err(Error::BadTarget { index: t, classes: k }),
        None => Ok(()),
    }
}

/// `-(1/N) sum_i ln(p[i, t_i] + 1e-12)`.
pub fn cross_entropy<T: Real>(probs: &Tensor<T>, targets: &[usize]) -> Result<T> {
    let (n, k) = probs.dims2("cross_entropy")?;
    check_targets(n, k, targets)?;
    let eps = T::cast(CE_EPSILON);
    let total: T = targets.iter().enumerate().map(|(i, &t)| -(probs.data()[i * k + t] + eps).ln()).sum();
    Ok(total / T::cast(n as f64))
}

/// Fused softmax + cross-entropy: returns `(loss, probs, dloss/dlogits)`
/// where the gradient is `(probs - onehot) / N`.
pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, targets: &[usize]) -> Result<(T, Tensor<T>, Tensor<T>)> {
    let probs = softmax(logits)?;
    let loss = cross_entropy(&probs, targets)?;
    let (n, k) = probs.dims2("softmax_cross_entropy")?;
    let inv_n = T::one() / T::cast(n as f64);
    let mut grad = probs.clone();
    for (i, &t) in targets.iter().enumerate() {
        let row = &mut grad.data_mut()[i * k..(i + 1) * k];
        row[t] -= T::one();
        row.iter_mut().for_each(|v| *v *= inv_n);
    }
    Ok((loss, probs, grad))
}
