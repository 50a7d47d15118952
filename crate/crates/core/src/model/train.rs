use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax_rows, joint_loss, JointLossConfig, MtlModel, Prediction};
use crate::corpus::{DiseaseLabel, LabeledExample, SoundLabel};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Mode, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 20, batch_size: 16, seed: 42, adam: AdamConfig::default() }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be >= 1".into()));
        }
        if !(self.adam.lr > 0.0 && self.adam.eps > 0.0) {
            return Err(Error::InvalidConfig("learning rate and eps must be > 0".into()));
        }
        Ok(())
    }
}

/// Stacked `[N, 1, coefficients, frames]` features with both label sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub features: Tensor<T>,
    pub sound: Vec<usize>,
    pub disease: Vec<usize>,
    pub patient_ids: Vec<u32>,
}

impl<T: Real> Dataset<T> {
    pub fn new(features: Tensor<T>, sound: Vec<usize>, disease: Vec<usize>, patient_ids: Vec<u32>) -> Result<Self> {
        let (n, _, _, _) = features.dims4("dataset")?;
        if sound.len() != n || disease.len() != n || patient_ids.len() != n {
            return Err(Error::ShapeMismatch {
                op: "dataset labels",
                expected: alloc::vec![n, n, n],
                found: alloc::vec![sound.len(), disease.len(), patient_ids.len()],
            });
        }
        for &s in &sound {
            if s >= SoundLabel::COUNT {
                return Err(Error::BadTarget { index: s, classes: SoundLabel::COUNT });
            }
        }
        for &d in &disease {
            if d >= DiseaseLabel::COUNT {
                return Err(Error::BadTarget { index: d, classes: DiseaseLabel::COUNT });
            }
        }
        Ok(Self { features, sound, disease, patient_ids })
    }

    /// Stacks examples that share one feature shape.
    pub fn from_examples(examples: &[LabeledExample]) -> Result<Self> {
        let first = examples.first().ok_or(Error::EmptyMatrix)?;
        let (h, w) = (first.features.rows(), first.features.cols());
        let mut data = Vec::with_capacity(examples.len() * h * w);
        for ex in examples {
            if (ex.features.rows(), ex.features.cols()) != (h, w) {
                return Err(Error::ShapeMismatch {
                    op: "dataset features",
                    expected: alloc::vec![h, w],
                    found: alloc::vec![ex.features.rows(), ex.features.cols()],
                });
            }
            data.extend(ex.features.values().iter().map(|&v| T::cast(v)));
        }
        let features = Tensor::from_vec(&[examples.len(), 1, h, w], data)?;
        Self::new(
            features,
            examples.iter().map(|e| e.sound.index()).collect(),
            examples.iter().map(|e| e.disease.index()).collect(),
            examples.iter().map(|e| e.patient_id).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.sound.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sound.is_empty()
    }

    /// `[channels, coefficients, frames]` of one example.
    pub fn input_shape(&self) -> [usize; 3] {
        let s = self.features.shape();
        [s[1], s[2], s[3]]
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.gather(idx),
            sound: idx.iter().map(|&i| self.sound[i]).collect(),
            disease: idx.iter().map(|&i| self.disease[i]).collect(),
            patient_ids: idx.iter().map(|&i| self.patient_ids[i]).collect(),
        }
    }
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub train_sound_acc: f64,
    pub train_disease_acc: f64,
    pub val_sound_acc: Option<f64>,
    pub val_disease_acc: Option<f64>,
    pub steps: usize,
    /// Seconds from the injected clock; `None` without one.
    pub wall_time_s: Option<f64>,
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len().max(1) as f64
}

/// Epoch-at-a-time driver over a model and its optimizer state.
pub struct Trainer<T> {
    model: MtlModel<T>,
    optimizer: AdamState<T>,
    cfg: TrainConfig,
    loss_cfg: JointLossConfig,
    rng: ChaCha8Rng,
    history: Vec<EpochRecord>,
    clock: Option<Box<dyn Fn() -> f64 + Send>>,
}

impl<T: Real> Trainer<T> {
    pub fn new(model: MtlModel<T>, cfg: TrainConfig, loss_cfg: JointLossConfig) -> Result<Self> {
        cfg.validate()?;
        loss_cfg.validate()?;
        Ok(Self {
            model,
            optimizer: AdamState::new(cfg.adam),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            loss_cfg,
            history: Vec::new(),
            clock: None,
        })
    }

    /// Monotonic seconds source used to stamp each epoch.
    pub fn with_clock(mut self, clock: impl Fn() -> f64 + Send + 'static) -> Self {
        self.clock = Some(Box::new(clock));
        self
    }

    pub fn model(&self) -> &MtlModel<T> {
        &self.model
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    /// Total optimizer steps so far.
    pub fn steps(&self) -> u64 {
        self.optimizer.t
    }

    pub fn run_epoch(&mut self, train: &Dataset<T>, val: Option<&Dataset<T>>) -> Result<&EpochRecord> {
        if train.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        let start = self.clock.as_ref().map(|c| c());
        let epoch = self.history.len() + 1;
        let last_good = self.history.last().map(|r| r.epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.rng);

        let (mut loss_sum, mut sound_hits, mut disease_hits, mut steps) = (0.0, 0usize, 0usize, 0usize);
        for (b, idx) in order.chunks(self.cfg.batch_size).enumerate() {
            let batch = train.subset(idx);
            self.model.zero_grad();
            let logits = self.model.forward(&batch.features, Mode::Train)?;
            let loss = joint_loss(&logits, &batch.sound, &batch.disease, &self.model, &self.loss_cfg)?;
            let total = loss.total.as_f64();
            if !total.is_finite() || !logits.sound.is_finite() || !logits.disease.is_finite() {
                self.model.zero_grad();
                self.model.backward(None, None).ok();
                return Err(Error::Divergence {
                    epoch,
                    batch: b,
                    last_good_epoch: last_good,
                    detail: format!(
                        "loss {total} (sound CE {}, disease CE {}, |W|^2 {})",
                        loss.sound_ce, loss.disease_ce, loss.weight_norm_sq
                    ),
                });
            }
            self.model.backward(Some(&loss.d_sound), Some(&loss.d_disease))?;
            loss.apply_reg_grads(&mut self.model);
            self.optimizer.step(&mut self.model.params_mut())?;

            loss_sum += total * idx.len() as f64;
            sound_hits += argmax_rows(&loss.sound_probs).iter().zip(&batch.sound).filter(|(a, b)| a == b).count();
            disease_hits += argmax_rows(&loss.disease_probs).iter().zip(&batch.disease).filter(|(a, b)| a == b).count();
            steps += 1;
        }
        let n = train.len() as f64;

        let (val_loss, val_sound_acc, val_disease_acc) = match val.filter(|v| !v.is_empty()) {
            Some(v) => {
                let (loss, pred) = self.model.evaluate(v, self.cfg.batch_size, &self.loss_cfg)?;
                (Some(loss), Some(accuracy(&pred.sound, &v.sound)), Some(accuracy(&pred.disease, &v.disease)))
            }
            None => (None, None, None),
        };
        let wall_time_s = match (&self.clock, start) {
            (Some(c), Some(s)) => Some(c() - s),
            _ => None,
        };
        self.history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            val_loss,
            train_sound_acc: sound_hits as f64 / n,
            train_disease_acc: disease_hits as f64 / n,
            val_sound_acc,
            val_disease_acc,
            steps,
            wall_time_s,
        });
        Ok(self.history.last().expect("just pushed"))
    }

    pub fn finish(self) -> (MtlModel<T>, Vec<EpochRecord>) {
        (self.model, self.history)
    }
}

/// Runs `cfg.epochs` epochs and returns the final-epoch model.
pub fn train<T: Real>(
    model: MtlModel<T>,
    train_set: &Dataset<T>,
    val_set: Option<&Dataset<T>>,
    cfg: &TrainConfig,
    loss_cfg: &JointLossConfig,
) -> Result<(MtlModel<T>, Vec<EpochRecord>)> {
    let mut t = Trainer::new(model, *cfg, *loss_cfg)?;
    for _ in 0..cfg.epochs {
        t.run_epoch(train_set, val_set)?;
    }
    Ok(t.finish())
}

impl<T: Real> MtlModel<T> {
    /// Inference over a whole dataset in chunks of `batch_size`.
    pub fn predict_dataset(&self, ds: &Dataset<T>, batch_size: usize) -> Result<Prediction<T>> {
        let batch_size = batch_size.max(1);
        let n = ds.len();
        let mut sound_probs = Vec::with_capacity(n * SoundLabel::COUNT);
        let mut disease_probs = Vec::with_capacity(n * DiseaseLabel::COUNT);
        let idx: Vec<usize> = (0..n).collect();
        for chunk in idx.chunks(batch_size) {
            let p = self.predict(&ds.features.gather(chunk))?;
            sound_probs.extend_from_slice(p.sound_probs.data());
            disease_probs.extend_from_slice(p.disease_probs.data());
        }
        let sound_probs = Tensor::from_vec(&[n, SoundLabel::COUNT], sound_probs)?;
        let disease_probs = Tensor::from_vec(&[n, DiseaseLabel::COUNT], disease_probs)?;
        Ok(Prediction { sound: argmax_rows(&sound_probs), disease: argmax_rows(&disease_probs), sound_probs, disease_probs })
    }

    /// Mean joint loss (inference mode) and predictions over `ds`.
    pub fn evaluate(&self, ds: &Dataset<T>, batch_size: usize, loss_cfg: &JointLossConfig) -> Result<(f64, Prediction<T>)> {
        let batch_size = batch_size.max(1);
        let idx: Vec<usize> = (0..ds.len()).collect();
        let mut loss_sum = 0.0;
        for chunk in idx.chunks(batch_size) {
            let b = ds.subset(chunk);
            let logits = self.infer(&b.features)?;
            let l = joint_loss(&logits, &b.sound, &b.disease, self, loss_cfg)?;
            loss_sum += l.total.as_f64() * chunk.len() as f64;
        }
        let pred = self.predict_dataset(ds, batch_size)?;
        Ok((loss_sum / ds.len().max(1) as f64, pred))
    }
}
