//! Single-input multi-output models: one shared convolutional trunk whose
//! pooled features feed a lung-sound head (4 classes) and a lung-disease
//! head (6 classes).

mod joint;
mod train;

pub use joint::{joint_loss, JointLoss, JointLossConfig};
pub use train::{train, Dataset, EpochRecord, TrainConfig, Trainer};

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DiseaseLabel, SoundLabel};
use crate::error::{Error, Result};
use crate::nn::{flop_count, softmax, Layer, LayerSpec, Mode, Param, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArchId {
    MobileNetMtl,
    Cnn2dMtl,
}

impl FromStr for ArchId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', '-'], "").as_str() {
            "mobilenetmtl" | "mobilenet" => Ok(ArchId::MobileNetMtl),
            "cnn2dmtl" | "cnn2d" | "cnn" => Ok(ArchId::Cnn2dMtl),
            _ => Err(Error::UnknownArch(s.into())),
        }
    }
}

impl fmt::Display for ArchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchId::MobileNetMtl => "mobilenet-mtl",
            ArchId::Cnn2dMtl => "cnn2d-mtl",
        })
    }
}

/// Filter counts of the trunk and width of the hidden head layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Widths {
    /// MobileNet: stem conv, four downsampling bottlenecks, mid conv, tail bottleneck.
    pub mobilenet: [usize; 7],
    /// Plain CNN: three conv layers.
    pub cnn: [usize; 3],
    pub head_hidden: usize,
}

impl Default for Widths {
    fn default() -> Self {
        Self { mobilenet: [16, 32, 64, 128, 256, 256, 256], cnn: [16, 32, 64], head_hidden: 128 }
    }
}

impl Widths {
    /// Every layer `w` wide; for small test models.
    pub fn uniform(w: usize) -> Self {
        Self { mobilenet: [w; 7], cnn: [w; 3], head_hidden: w }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: ArchId,
    /// `(channels, coefficients, frames)`; channels is 1 for MFCC input.
    pub input_shape: [usize; 3],
    pub widths: Widths,
}

impl ModelConfig {
    pub fn new(arch: ArchId, input_shape: [usize; 3]) -> Self {
        Self { arch, input_shape, widths: Widths::default() }
    }
}

fn bottleneck(specs: &mut Vec<LayerSpec>, in_ch: usize, out_ch: usize, stride: usize) {
    specs.extend([
        LayerSpec::DepthwiseConv2d { channels: in_ch, kernel: 3, stride, padding: 1 },
        LayerSpec::batch_norm(in_ch),
        LayerSpec::Relu,
        LayerSpec::PointwiseConv2d { in_channels: in_ch, out_channels: out_ch },
        LayerSpec::batch_norm(out_ch),
        LayerSpec::Relu,
    ]);
}

/// Trunk layer stack ending in global average pooling.
pub fn trunk_specs(cfg: &ModelConfig) -> Vec<LayerSpec> {
    let c_in = cfg.input_shape[0];
    let mut s = Vec::new();
    match cfg.arch {
        ArchId::MobileNetMtl => {
            let [stem, b1, b2, b3, b4, mid, tail] = cfg.widths.mobilenet;
            s.push(LayerSpec::Conv2d { in_channels: c_in, out_channels: stem, kernel: 3, stride: 2, padding: 1 });
            s.push(LayerSpec::Relu);
            let mut ch = stem;
            for f in [b1, b2, b3, b4] {
                bottleneck(&mut s, ch, f, 2);
                ch = f;
            }
            s.push(LayerSpec::Conv2d { in_channels: ch, out_channels: mid, kernel: 3, stride: 1, padding: 1 });
            s.push(LayerSpec::Relu);
            bottleneck(&mut s, mid, tail, 1);
        }
        ArchId::Cnn2dMtl => {
            let [a, b, c] = cfg.widths.cnn;
            s.extend([
                LayerSpec::Conv2d { in_channels: c_in, out_channels: a, kernel: 3, stride: 1, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::Conv2d { in_channels: a, out_channels: b, kernel: 3, stride: 2, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::Conv2d { in_channels: b, out_channels: c, kernel: 3, stride: 2, padding: 1 },
                LayerSpec::Relu,
            ]);
        }
    }
    s.push(LayerSpec::GlobalAvgPool);
    s
}

/// Dense(hidden) -> ReLU -> Dense(classes). Softmax is applied outside the
/// layer stack so training can fuse it with the loss.
pub fn head_specs(features: usize, hidden: usize, classes: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Dense { inputs: features, outputs: hidden },
        LayerSpec::Relu,
        LayerSpec::Dense { inputs: hidden, outputs: classes },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Sound,
    Disease,
}

/// Raw head outputs for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadLogits<T> {
    pub sound: Tensor<T>,
    pub disease: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub sound_probs: Tensor<T>,
    pub disease_probs: Tensor<T>,
    pub sound: Vec<usize>,
    pub disease: Vec<usize>,
}

/// Row-wise argmax; ties resolve to the lowest index.
pub fn argmax_rows<T: Real>(probs: &Tensor<T>) -> Vec<usize> {
    let k = probs.shape()[1];
    probs
        .data()
        .chunks_exact(k)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MtlModel<T> {
    config: ModelConfig,
    trunk: Vec<Layer<T>>,
    sound_head: Vec<Layer<T>>,
    disease_head: Vec<Layer<T>>,
}

fn run_stack<T: Real>(layers: &mut [Layer<T>], x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
    let mut h = x.clone();
    for l in layers.iter_mut() {
        h = l.forward(&h, mode)?;
    }
    Ok(h)
}

fn infer_stack<T: Real>(layers: &[Layer<T>], x: &Tensor<T>) -> Result<Tensor<T>> {
    let mut h = x.clone();
    for l in layers {
        h = l.infer(&h)?;
    }
    Ok(h)
}

fn back_stack<T: Real>(layers: &mut [Layer<T>], dy: &Tensor<T>) -> Result<Tensor<T>> {
    let mut g = dy.clone();
    for l in layers.iter_mut().rev() {
        g = l.backward(&g)?;
    }
    Ok(g)
}

/// Builds an initialized model with the standard widths for `arch`.
pub fn build_model<T: Real>(arch: ArchId, input_shape: [usize; 3], seed: u64) -> Result<MtlModel<T>> {
    MtlModel::from_config(ModelConfig::new(arch, input_shape), seed)
}

impl<T: Real> MtlModel<T> {
    pub fn from_config(config: ModelConfig, seed: u64) -> Result<Self> {
        let trunk_spec = trunk_specs(&config);
        let feat = feature_width(&trunk_spec, &config.input_shape)?;
        let hidden = config.widths.head_hidden;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut build = |specs: &[LayerSpec]| specs.iter().map(|s| Layer::new(s, &mut rng)).collect::<Vec<_>>();
        let trunk = build(&trunk_spec);
        let sound_head = build(&head_specs(feat, hidden, SoundLabel::COUNT));
        let disease_head = build(&head_specs(feat, hidden, DiseaseLabel::COUNT));
        Ok(Self { config, trunk, sound_head, disease_head })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn arch(&self) -> ArchId {
        self.config.arch
    }

    pub fn layer_specs(&self) -> (Vec<LayerSpec>, Vec<LayerSpec>, Vec<LayerSpec>) {
        let specs = |ls: &[Layer<T>]| ls.iter().map(Layer::spec).collect();
        (specs(&self.trunk), specs(&self.sound_head), specs(&self.disease_head))
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = x.dims4("model input")?;
        if [c, h, w] != self.config.input_shape {
            let [ec, eh, ew] = self.config.input_shape;
            return Err(Error::ShapeMismatch { op: "model input", expected: vec![x.shape()[0], ec, eh, ew], found: x.shape().to_vec() });
        }
        Ok(())
    }

    /// Training forward; caches activations for [`MtlModel::backward`].
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<HeadLogits<T>> {
        self.check_input(x)?;
        let feat = run_stack(&mut self.trunk, x, mode)?;
        Ok(HeadLogits {
            sound: run_stack(&mut self.sound_head, &feat, mode)?,
            disease: run_stack(&mut self.disease_head, &feat, mode)?,
        })
    }

    /// Backpropagates logit gradients of either or both heads through the
    /// shared trunk. A missing head contributes nothing (its cache is
    /// dropped).
    pub fn backward(&mut self, d_sound: Option<&Tensor<T>>, d_disease: Option<&Tensor<T>>) -> Result<()> {
        let mut d_feat: Option<Tensor<T>> = None;
        for (head, grad) in [(&mut self.sound_head, d_sound), (&mut self.disease_head, d_disease)] {
            match grad {
                Some(g) => {
                    let d = back_stack(head, g)?;
                    d_feat = Some(match d_feat {
                        None => d,
                        Some(mut acc) => {
                            acc.data_mut().iter_mut().zip(d.data()).for_each(|(a, &b)| *a += b);
                            acc
                        }
                    });
                }
                None => head.iter_mut().for_each(Layer::clear_cache),
            }
        }
        let d_feat = d_feat.ok_or(Error::StaleCache("model backward: no head gradient"))?;
        back_stack(&mut self.trunk, &d_feat)?;
        Ok(())
    }

    /// Inference forward through shared state; batch norm uses running
    /// statistics, so rows are processed independently.
    pub fn infer(&self, x: &Tensor<T>) -> Result<HeadLogits<T>> {
        self.check_input(x)?;
        let feat = infer_stack(&self.trunk, x)?;
        Ok(HeadLogits { sound: infer_stack(&self.sound_head, &feat)?, disease: infer_stack(&self.disease_head, &feat)? })
    }

    /// Both heads' class probabilities and argmax labels from one pass.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Prediction<T>> {
        let logits = self.infer(x)?;
        let sound_probs = softmax(&logits.sound)?;
        let disease_probs = softmax(&logits.disease)?;
        let sound = argmax_rows(&sound_probs);
        let disease = argmax_rows(&disease_probs);
        Ok(Prediction { sound_probs, disease_probs, sound, disease })
    }

    pub fn zero_grad(&mut self) {
        self.layers_mut().for_each(Layer::zero_grad);
    }

    fn layers<'a>(&'a self) -> impl Iterator<Item = (&'static str, usize, &'a Layer<T>)> {
        let tag = |name: &'static str, ls: &'a [Layer<T>]| ls.iter().enumerate().map(move |(i, l)| (name, i, l));
        tag("trunk", &self.trunk).chain(tag("sound_head", &self.sound_head)).chain(tag("disease_head", &self.disease_head))
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer<T>> {
        self.trunk.iter_mut().chain(self.sound_head.iter_mut()).chain(self.disease_head.iter_mut())
    }

    /// Every learnable tensor with a stable dotted name, e.g. `trunk.0.weight`.
    pub fn named_params(&self) -> Vec<(String, &Param<T>)> {
        self.layers()
            .flat_map(|(part, i, l)| l.params().into_iter().map(move |(n, p)| (format!("{part}.{i}.{n}"), p)))
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers_mut().flat_map(|l| l.params_mut().into_iter().map(|(_, p)| p)).collect()
    }

    /// Parameters and batch-norm buffers: the full persistent state.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        self.layers()
            .flat_map(|(part, i, l)| {
                let mut v: Vec<(String, &Tensor<T>)> =
                    l.params().into_iter().map(|(n, p)| (format!("{part}.{i}.{n}"), &p.value)).collect();
                v.extend(l.buffers().into_iter().map(|(n, t)| (format!("{part}.{i}.{n}"), t)));
                v
            })
            .collect()
    }

    /// Overwrites one named tensor; shape must match exactly.
    pub fn set_tensor(&mut self, name: &str, shape: &[usize], values: Vec<T>) -> Result<()> {
        let mut parts = name.splitn(3, '.');
        let (part, idx, field) = match (parts.next(), parts.next().and_then(|i| i.parse::<usize>().ok()), parts.next()) {
            (Some(p), Some(i), Some(f)) => (p, i, f),
            _ => return Err(Error::InvalidRecord(format!("bad tensor name `{name}`"))),
        };
        let stack = match part {
            "trunk" => &mut self.trunk,
            "sound_head" => &mut self.sound_head,
            "disease_head" => &mut self.disease_head,
            _ => return Err(Error::InvalidRecord(format!("bad tensor name `{name}`"))),
        };
        let layer = stack.get_mut(idx).ok_or_else(|| Error::InvalidRecord(format!("no layer for `{name}`")))?;
        let new = Tensor::from_vec(shape, values)?;
        for (n, p) in layer.params_mut() {
            if n == field {
                new.ensure_shape("set_tensor", p.value.shape())?;
                p.value = new;
                return Ok(());
            }
        }
        for (n, t) in layer.buffers_mut() {
            if n == field {
                new.ensure_shape("set_tensor", t.shape())?;
                *t = new;
                return Ok(());
            }
        }
        Err(Error::InvalidRecord(format!("no tensor `{name}`")))
    }

    /// Per-sample multiply-accumulates of one forward pass (trunk once, both heads).
    pub fn flop_count(&self) -> Result<u64> {
        let (trunk, sound, disease) = self.layer_specs();
        let feat = [feature_width(&trunk, &self.config.input_shape)?];
        Ok(flop_count(&trunk, &self.config.input_shape)? + flop_count(&sound, &feat)? + flop_count(&disease, &feat)?)
    }

    /// Cost of the equivalent single-task network: trunk plus one head.
    pub fn single_task_flop_count(&self, task: Task) -> Result<u64> {
        let (trunk, sound, disease) = self.layer_specs();
        let feat = [feature_width(&trunk, &self.config.input_shape)?];
        let head = match task {
            Task::Sound => sound,
            Task::Disease => disease,
        };
        Ok(flop_count(&trunk, &self.config.input_shape)? + flop_count(&head, &feat)?)
    }
}

fn feature_width(trunk: &[LayerSpec], input: &[usize; 3]) -> Result<usize> {
    let mut shape = input.to_vec();
    for s in trunk {
        shape = s.output_shape(&shape)?;
    }
    match shape[..] {
        [d] => Ok(d),
        _ => Err(Error::UnresolvedShape(format!("trunk output {shape:?} is not a vector"))),
    }
}
