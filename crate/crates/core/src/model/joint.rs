use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{HeadLogits, MtlModel};
use crate::error::{Error, Result};
use crate::nn::{softmax_cross_entropy, Real, Tensor};

/// Weighting of the two task losses and the L2 penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JointLossConfig {
    pub w_sound: f64,
    pub w_disease: f64,
    pub lambda_reg: f64,
}

impl Default for JointLossConfig {
    fn default() -> Self {
        Self { w_sound: 1.0, w_disease: 1.0, lambda_reg: 1e-4 }
    }
}

impl JointLossConfig {
    /// Number of tasks sharing the trunk.
    pub const TASKS: usize = 2;

    pub fn validate(&self) -> Result<()> {
        let ok = self.w_sound > 0.0 && self.w_disease > 0.0 && self.lambda_reg >= 0.0 && self.lambda_reg.is_finite();
        if ok && self.w_sound.is_finite() && self.w_disease.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig("task weights must be > 0 and lambda_reg >= 0".into()))
        }
    }
}

/// Value and gradients of the joint objective for one batch.
#[derive(Debug, Clone)]
pub struct JointLoss<T> {
    pub total: T,
    pub sound_ce: T,
    pub disease_ce: T,
    /// `||W||^2` over decayed weights, before scaling by lambda.
    pub weight_norm_sq: T,
    pub sound_probs: Tensor<T>,
    pub disease_probs: Tensor<T>,
    /// Gradient of `total` w.r.t. the sound logits.
    pub d_sound: Tensor<T>,
    /// Gradient of `total` w.r.t. the disease logits.
    pub d_disease: Tensor<T>,
    /// `2 lambda W` for every decayed parameter, in `params_mut` order.
    pub reg_grads: Vec<Tensor<T>>,
}

/// `w_s CE_sound + w_d CE_disease + lambda ||W||^2` where `W` spans
/// conv/dense weights only.
pub fn joint_loss<T: Real>(
    logits: &HeadLogits<T>,
    sound_targets: &[usize],
    disease_targets: &[usize],
    model: &MtlModel<T>,
    cfg: &JointLossConfig,
) -> Result<JointLoss<T>> {
    cfg.validate()?;
    let ns = logits.sound.shape().first().copied().unwrap_or(0);
    let nd = logits.disease.shape().first().copied().unwrap_or(0);
    if ns != nd || sound_targets.len() != ns || disease_targets.len() != nd {
        return Err(Error::ShapeMismatch {
            op: "joint_loss",
            expected: alloc::vec![ns, ns, ns],
            found: alloc::vec![nd, sound_targets.len(), disease_targets.len()],
        });
    }
    let (sound_ce, sound_probs, mut d_sound) = softmax_cross_entropy(&logits.sound, sound_targets)?;
    let (disease_ce, disease_probs, mut d_disease) = softmax_cross_entropy(&logits.disease, disease_targets)?;
    let (ws, wd) = (T::cast(cfg.w_sound), T::cast(cfg.w_disease));
    d_sound.data_mut().iter_mut().for_each(|g| *g *= ws);
    d_disease.data_mut().iter_mut().for_each(|g| *g *= wd);

    let lambda = T::cast(cfg.lambda_reg);
    let two_lambda = lambda + lambda;
    let mut weight_norm_sq = T::zero();
    let mut reg_grads = Vec::new();
    for (_, p) in model.named_params() {
        if p.decay {
            weight_norm_sq += p.value.data().iter().map(|&w| w * w).sum::<T>();
            let mut g = p.value.clone();
            g.data_mut().iter_mut().for_each(|w| *w *= two_lambda);
            reg_grads.push(g);
        }
    }
    let total = ws * sound_ce + wd * disease_ce + lambda * weight_norm_sq;
    Ok(JointLoss { total, sound_ce, disease_ce, weight_norm_sq, sound_probs, disease_probs, d_sound, d_disease, reg_grads })
}

impl<T: Real> JointLoss<T> {
    /// Adds the weight-decay gradients into the model's accumulated grads.
    pub fn apply_reg_grads(&self, model: &mut MtlModel<T>) {
        let decayed = model.params_mut().into_iter().filter(|p| p.decay);
        for (p, g) in decayed.zip(&self.reg_grads) {
            p.grad.data_mut().iter_mut().zip(g.data()).for_each(|(a, &b)| *a += b);
        }
    }
}
