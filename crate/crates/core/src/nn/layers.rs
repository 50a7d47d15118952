use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops::{
    batchnorm_impl, col2im, conv2d_impl, conv_out_dim, dense_forward, depthwise_plane, gemm_nt,
    gemm_tn, global_avg_pool, relu, Geometry, RunningStats,
};
use super::{softmax, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// A learnable tensor with its accumulated gradient. `decay` marks tensors
/// that take part in the weight-decay regularizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub decay: bool,
}

impl<T: Real> Param<T> {
    pub fn new(value: Tensor<T>, decay: bool) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad, decay }
    }

    fn kaiming<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Self {
        let bound = Float::sqrt(6.0 / fan_in.max(1) as f64);
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::cast(rng.gen_range(-bound..bound))).collect();
        Self::new(Tensor::from_vec(shape, data).expect("shape product"), true)
    }
}

/// Hyperparameters of one layer; enough to rebuild it and to count its cost.
/// Spatial shapes are per sample: `[C, H, W]` for maps, `[D]` for vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LayerSpec {
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize },
    DepthwiseConv2d { channels: usize, kernel: usize, stride: usize, padding: usize },
    PointwiseConv2d { in_channels: usize, out_channels: usize },
    BatchNorm { channels: usize, eps: f64, momentum: f64 },
    Relu,
    GlobalAvgPool,
    Dense { inputs: usize, outputs: usize },
    Softmax,
}

fn unresolved(spec: &LayerSpec, input: &[usize]) -> Error {
    Error::UnresolvedShape(alloc::format!("{spec:?} cannot take input {input:?}"))
}

impl LayerSpec {
    pub fn batch_norm(channels: usize) -> Self {
        LayerSpec::BatchNorm { channels, eps: 1e-5, momentum: 0.9 }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let err = || unresolved(self, input);
        let map = || match input {
            [c, h, w] => Ok((*c, *h, *w)),
            _ => Err(err()),
        };
        match *self {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, padding } => {
                let (c, h, w) = map()?;
                if c != in_channels {
                    return Err(err());
                }
                let ho = conv_out_dim(h, kernel, stride, padding).map_err(|_| err())?;
                let wo = conv_out_dim(w, kernel, stride, padding).map_err(|_| err())?;
                Ok(vec![out_channels, ho, wo])
            }
            LayerSpec::DepthwiseConv2d { channels, kernel, stride, padding } => {
                let (c, h, w) = map()?;
                if c != channels {
                    return Err(err());
                }
                let ho = conv_out_dim(h, kernel, stride, padding).map_err(|_| err())?;
                let wo = conv_out_dim(w, kernel, stride, padding).map_err(|_| err())?;
                Ok(vec![c, ho, wo])
            }
            LayerSpec::PointwiseConv2d { in_channels, out_channels } => {
                let (c, h, w) = map()?;
                if c != in_channels {
                    return Err(err());
                }
                Ok(vec![out_channels, h, w])
            }
            LayerSpec::BatchNorm { channels, .. } => {
                let (c, _, _) = map()?;
                if c != channels {
                    return Err(err());
                }
                Ok(input.to_vec())
            }
            LayerSpec::Relu | LayerSpec::Softmax => {
                if input.is_empty() {
                    return Err(err());
                }
                Ok(input.to_vec())
            }
            LayerSpec::GlobalAvgPool => map().map(|(c, _, _)| vec![c]),
            LayerSpec::Dense { inputs, outputs } => match input {
                [d] if *d == inputs => Ok(vec![outputs]),
                _ => Err(err()),
            },
        }
    }

    /// Multiply-accumulates for one sample. Normalization, activations and
    /// pooling count zero.
    pub fn macs(&self, input: &[usize]) -> Result<u64> {
        let out = self.output_shape(input)?;
        let spatial = |s: &[usize]| (s[1] * s[2]) as u64;
        Ok(match *self {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                (kernel * kernel * in_channels * out_channels) as u64 * spatial(&out)
            }
            LayerSpec::DepthwiseConv2d { channels, kernel, .. } => (kernel * kernel * channels) as u64 * spatial(&out),
            LayerSpec::PointwiseConv2d { in_channels, out_channels } => {
                (in_channels * out_channels) as u64 * spatial(&out)
            }
            LayerSpec::Dense { inputs, outputs } => (inputs * outputs) as u64,
            LayerSpec::BatchNorm { .. } | LayerSpec::Relu | LayerSpec::GlobalAvgPool | LayerSpec::Softmax => 0,
        })
    }
}

/// Total per-sample multiply-accumulates of a layer stack.
pub fn flop_count(specs: &[LayerSpec], input_shape: &[usize]) -> Result<u64> {
    let mut shape = input_shape.to_vec();
    let mut total = 0u64;
    for s in specs {
        total += s.macs(&shape)?;
        shape = s.output_shape(&shape)?;
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub stride: usize,
    pub padding: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<(Vec<T>, Geometry, usize)>,
}

impl<T: Real> Conv2d<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>, stride: usize, padding: usize) -> Self {
        Self { stride, padding, weight: Param::new(weight, true), bias: Param::new(bias, false), cache: None }
    }

    fn run(&mut self, x: &Tensor<T>, keep: bool) -> Result<Tensor<T>> {
        let (out, cols, g) = conv2d_impl(x, &self.weight.value, Some(&self.bias.value), self.stride, self.padding, keep)?;
        if keep {
            self.cache = Some((cols, g, x.shape()[0]));
        }
        Ok(out)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (cols, g, n) = self.cache.take().ok_or(Error::StaleCache("conv2d"))?;
        let f = self.weight.value.shape()[0];
        dy.ensure_shape("conv2d backward", &[n, f, g.ho, g.wo])?;
        let (patch, p) = (g.patch(), g.positions());
        let mut dx = Tensor::zeros(&[n, g.c, g.h, g.w]);
        let mut dcol = vec![T::zero(); patch * p];
        for s in 0..n {
            let dys = &dy.data()[s * f * p..(s + 1) * f * p];
            let col = &cols[s * patch * p..(s + 1) * patch * p];
            gemm_nt(f, p, patch, dys, col, self.weight.grad.data_mut());
            for (fi, db) in self.bias.grad.data_mut().iter_mut().enumerate() {
                *db += dys[fi * p..(fi + 1) * p].iter().copied().sum::<T>();
            }
            dcol.iter_mut().for_each(|v| *v = T::zero());
            gemm_tn(patch, f, p, self.weight.value.data(), dys, &mut dcol);
            col2im(&dcol, &g, &mut dx.data_mut()[s * g.c * g.h * g.w..(s + 1) * g.c * g.h * g.w]);
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone)]
pub struct DepthwiseConv2d<T> {
    pub stride: usize,
    pub padding: usize,
    pub weight: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Real> DepthwiseConv2d<T> {
    pub fn new(weight: Tensor<T>, stride: usize, padding: usize) -> Self {
        Self { stride, padding, weight: Param::new(weight, true), cache: None }
    }

    fn geometry(&self, x: &Tensor<T>) -> Result<Geometry> {
        let (_, c, h, w) = x.dims4("depthwise_conv2d")?;
        let s = self.weight.value.shape();
        Geometry::new(c, h, w, s[1], s[2], self.stride, self.padding)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache.take().ok_or(Error::StaleCache("depthwise_conv2d"))?;
        let g = self.geometry(&x)?;
        let n = x.shape()[0];
        dy.ensure_shape("depthwise backward", &[n, g.c, g.ho, g.wo])?;
        let (hw, p) = (g.h * g.w, g.positions());
        let kk = g.kh * g.kw;
        let mut dx = Tensor::zeros(x.shape());
        for s in 0..n {
            for ch in 0..g.c {
                let plane = &x.data()[(s * g.c + ch) * hw..(s * g.c + ch + 1) * hw];
                let dyp = &dy.data()[(s * g.c + ch) * p..(s * g.c + ch + 1) * p];
                let k = &self.weight.value.data()[ch * kk..(ch + 1) * kk];
                let dk = &mut self.weight.grad.data_mut()[ch * kk..(ch + 1) * kk];
                let dxp = &mut dx.data_mut()[(s * g.c + ch) * hw..(s * g.c + ch + 1) * hw];
                for ki in 0..g.kh {
                    for kj in 0..g.kw {
                        let wv = k[ki * g.kw + kj];
                        let mut acc = T::zero();
                        for oh in 0..g.ho {
                            let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                            if ih < 0 || ih as usize >= g.h {
                                continue;
                            }
                            let ih = ih as usize;
                            for ow in 0..g.wo {
                                let iw = (ow * g.stride + kj) as isize - g.pad as isize;
                                if iw < 0 || iw as usize >= g.w {
                                    continue;
                                }
                                let d = dyp[oh * g.wo + ow];
                                acc += d * plane[ih * g.w + iw as usize];
                                dxp[ih * g.w + iw as usize] += d * wv;
                            }
                        }
                        dk[ki * g.kw + kj] += acc;
                    }
                }
            }
        }
        Ok(dx)
    }

    fn run(&mut self, x: &Tensor<T>, keep: bool) -> Result<Tensor<T>> {
        let g = self.geometry(x)?;
        let n = x.shape()[0];
        let (hw, p, kk) = (g.h * g.w, g.positions(), g.kh * g.kw);
        let mut out = Tensor::zeros(&[n, g.c, g.ho, g.wo]);
        for s in 0..n {
            for ch in 0..g.c {
                depthwise_plane(
                    &x.data()[(s * g.c + ch) * hw..(s * g.c + ch + 1) * hw],
                    &self.weight.value.data()[ch * kk..(ch + 1) * kk],
                    &g,
                    &mut out.data_mut()[(s * g.c + ch) * p..(s * g.c + ch + 1) * p],
                );
            }
        }
        if keep {
            self.cache = Some(x.clone());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct PointwiseConv2d<T> {
    pub weight: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Real> PointwiseConv2d<T> {
    pub fn new(weight: Tensor<T>) -> Self {
        Self { weight: Param::new(weight, true), cache: None }
    }

    fn run(&mut self, x: &Tensor<T>, keep: bool) -> Result<Tensor<T>> {
        let y = super::pointwise_conv2d_forward(x, &self.weight.value)?;
        if keep {
            self.cache = Some(x.clone());
        }
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache.take().ok_or(Error::StaleCache("pointwise_conv2d"))?;
        let (n, c, h, w) = x.dims4("pointwise backward")?;
        let f = self.weight.value.shape()[0];
        dy.ensure_shape("pointwise backward", &[n, f, h, w])?;
        let hw = h * w;
        let mut dx = Tensor::zeros(x.shape());
        for s in 0..n {
            let dys = &dy.data()[s * f * hw..(s + 1) * f * hw];
            gemm_nt(f, hw, c, dys, &x.data()[s * c * hw..(s + 1) * c * hw], self.weight.grad.data_mut());
            gemm_tn(c, f, hw, self.weight.value.data(), dys, &mut dx.data_mut()[s * c * hw..(s + 1) * c * hw]);
        }
        Ok(dx)
    }
}

/// Normalized input, per-channel 1/std, input shape and mode of the last forward.
type BnCache<T> = (Vec<T>, Vec<T>, Vec<usize>, Mode);

#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    pub eps: f64,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running: RunningStats<T>,
    cache: Option<BnCache<T>>,
}

impl<T: Real> BatchNorm2d<T> {
    pub fn new(channels: usize, eps: f64, momentum: f64) -> Self {
        Self {
            eps,
            gamma: Param::new(Tensor::full(&[channels], T::one()), false),
            beta: Param::new(Tensor::zeros(&[channels]), false),
            running: RunningStats::new(channels, momentum),
            cache: None,
        }
    }

    fn run(&mut self, x: &Tensor<T>, mode: Mode, keep: bool) -> Result<Tensor<T>> {
        let t = batchnorm_impl(x, &self.gamma.value, &self.beta.value, self.eps, mode, &mut self.running, keep)?;
        if keep {
            self.cache = Some((t.xhat, t.inv_std, x.shape().to_vec(), mode));
        }
        Ok(t.out)
    }

    #[allow(clippy::needless_range_loop)]
    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (xhat, inv_std, shape, mode) = self.cache.take().ok_or(Error::StaleCache("batchnorm"))?;
        dy.ensure_shape("batchnorm backward", &shape)?;
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let hw = h * w;
        let m = T::cast((n * hw) as f64);
        let mut dx = Tensor::zeros(&shape);
        for ch in 0..c {
            let idx = |s: usize| (s * c + ch) * hw..(s * c + ch + 1) * hw;
            let (mut sum_dy, mut sum_dy_xhat) = (T::zero(), T::zero());
            for s in 0..n {
                for i in idx(s) {
                    sum_dy += dy.data()[i];
                    sum_dy_xhat += dy.data()[i] * xhat[i];
                }
            }
            self.beta.grad.data_mut()[ch] += sum_dy;
            self.gamma.grad.data_mut()[ch] += sum_dy_xhat;
            let g = self.gamma.value.data()[ch];
            let k = g * inv_std[ch];
            for s in 0..n {
                for i in idx(s) {
                    dx.data_mut()[i] = match mode {
                        Mode::Train => k / m * (m * dy.data()[i] - sum_dy - xhat[i] * sum_dy_xhat),
                        Mode::Infer => k * dy.data()[i],
                    };
                }
            }
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu<T> {
    cache: Option<Tensor<T>>,
}

impl<T: Real> Relu<T> {
    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache.take().ok_or(Error::StaleCache("relu"))?;
        dy.ensure_shape("relu backward", x.shape())?;
        let mut dx = dy.clone();
        for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
            // subgradient 0 at exactly 0
            if v <= T::zero() {
                *d = T::zero();
            }
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    cache: Option<Vec<usize>>,
}

impl GlobalAvgPool {
    fn backward<T: Real>(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.cache.take().ok_or(Error::StaleCache("global_avg_pool"))?;
        dy.ensure_shape("global_avg_pool backward", &shape[..2])?;
        let hw = shape[2] * shape[3];
        let inv = T::one() / T::cast(hw as f64);
        let mut dx = Tensor::zeros(&shape);
        for (plane, &d) in dx.data_mut().chunks_exact_mut(hw).zip(dy.data()) {
            plane.iter_mut().for_each(|v| *v = d * inv);
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Dense<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Self {
        Self { weight: Param::new(weight, true), bias: Param::new(bias, false), cache: None }
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache.take().ok_or(Error::StaleCache("dense"))?;
        let (n, d_in) = x.dims2("dense backward")?;
        let d_out = self.weight.value.shape()[1];
        dy.ensure_shape("dense backward", &[n, d_out])?;
        gemm_tn(d_in, n, d_out, x.data(), dy.data(), self.weight.grad.data_mut());
        for row in dy.data().chunks_exact(d_out) {
            for (b, &d) in self.bias.grad.data_mut().iter_mut().zip(row) {
                *b += d;
            }
        }
        let mut dx = Tensor::zeros(&[n, d_in]);
        gemm_nt(n, d_out, d_in, dy.data(), self.weight.value.data(), dx.data_mut());
        Ok(dx)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Softmax<T> {
    cache: Option<Tensor<T>>,
}

impl<T: Real> Softmax<T> {
    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.cache.take().ok_or(Error::StaleCache("softmax"))?;
        let (_, k) = y.dims2("softmax backward")?;
        dy.ensure_shape("softmax backward", y.shape())?;
        let mut dx = Tensor::zeros(y.shape());
        for ((yr, dr), xr) in y.data().chunks_exact(k).zip(dy.data().chunks_exact(k)).zip(dx.data_mut().chunks_exact_mut(k)) {
            let dot: T = yr.iter().zip(dr).map(|(&a, &b)| a * b).sum();
            for i in 0..k {
                xr[i] = yr[i] * (dr[i] - dot);
            }
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone)]
pub enum Layer<T> {
    Conv2d(Conv2d<T>),
    DepthwiseConv2d(DepthwiseConv2d<T>),
    PointwiseConv2d(PointwiseConv2d<T>),
    BatchNorm(BatchNorm2d<T>),
    Relu(Relu<T>),
    GlobalAvgPool(GlobalAvgPool),
    Dense(Dense<T>),
    Softmax(Softmax<T>),
}

impl<T: Real> Layer<T> {
    /// Fresh layer with Kaiming-uniform (fan-in) weights, zero biases and
    /// unit/zero batch-norm affine parameters.
    pub fn new<R: Rng + ?Sized>(spec: &LayerSpec, rng: &mut R) -> Self {
        match *spec {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, padding } => {
                let w = Param::kaiming(&[out_channels, in_channels, kernel, kernel], in_channels * kernel * kernel, rng);
                Layer::Conv2d(Conv2d {
                    stride,
                    padding,
                    weight: w,
                    bias: Param::new(Tensor::zeros(&[out_channels]), false),
                    cache: None,
                })
            }
            LayerSpec::DepthwiseConv2d { channels, kernel, stride, padding } => {
                let w = Param::kaiming(&[channels, kernel, kernel], kernel * kernel, rng);
                Layer::DepthwiseConv2d(DepthwiseConv2d { stride, padding, weight: w, cache: None })
            }
            LayerSpec::PointwiseConv2d { in_channels, out_channels } => {
                let w = Param::kaiming(&[out_channels, in_channels], in_channels, rng);
                Layer::PointwiseConv2d(PointwiseConv2d { weight: w, cache: None })
            }
            LayerSpec::BatchNorm { channels, eps, momentum } => Layer::BatchNorm(BatchNorm2d::new(channels, eps, momentum)),
            LayerSpec::Relu => Layer::Relu(Relu { cache: None }),
            LayerSpec::GlobalAvgPool => Layer::GlobalAvgPool(GlobalAvgPool { cache: None }),
            LayerSpec::Dense { inputs, outputs } => {
                let w = Param::kaiming(&[inputs, outputs], inputs, rng);
                Layer::Dense(Dense { weight: w, bias: Param::new(Tensor::zeros(&[outputs]), false), cache: None })
            }
            LayerSpec::Softmax => Layer::Softmax(Softmax { cache: None }),
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv2d(l) => {
                let s = l.weight.value.shape();
                LayerSpec::Conv2d { in_channels: s[1], out_channels: s[0], kernel: s[2], stride: l.stride, padding: l.padding }
            }
            Layer::DepthwiseConv2d(l) => {
                let s = l.weight.value.shape();
                LayerSpec::DepthwiseConv2d { channels: s[0], kernel: s[1], stride: l.stride, padding: l.padding }
            }
            Layer::PointwiseConv2d(l) => {
                let s = l.weight.value.shape();
                LayerSpec::PointwiseConv2d { in_channels: s[1], out_channels: s[0] }
            }
            Layer::BatchNorm(l) => {
                LayerSpec::BatchNorm { channels: l.gamma.value.len(), eps: l.eps, momentum: l.running.momentum }
            }
            Layer::Relu(_) => LayerSpec::Relu,
            Layer::GlobalAvgPool(_) => LayerSpec::GlobalAvgPool,
            Layer::Dense(l) => {
                let s = l.weight.value.shape();
                LayerSpec::Dense { inputs: s[0], outputs: s[1] }
            }
            Layer::Softmax(_) => LayerSpec::Softmax,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::DepthwiseConv2d(_) => "depthwise_conv2d",
            Layer::PointwiseConv2d(_) => "pointwise_conv2d",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Relu(_) => "relu",
            Layer::GlobalAvgPool(_) => "global_avg_pool",
            Layer::Dense(_) => "dense",
            Layer::Softmax(_) => "softmax",
        }
    }

    /// Training-path forward: caches what `backward` needs. In train mode
    /// batch-norm layers use and fold in batch statistics.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        match self {
            Layer::Conv2d(l) => l.run(x, true),
            Layer::DepthwiseConv2d(l) => l.run(x, true),
            Layer::PointwiseConv2d(l) => l.run(x, true),
            Layer::BatchNorm(l) => l.run(x, mode, true),
            Layer::Relu(l) => {
                l.cache = Some(x.clone());
                Ok(relu(x))
            }
            Layer::GlobalAvgPool(l) => {
                let y = global_avg_pool(x)?;
                l.cache = Some(x.shape().to_vec());
                Ok(y)
            }
            Layer::Dense(l) => {
                let y = dense_forward(x, &l.weight.value, &l.bias.value)?;
                l.cache = Some(x.clone());
                Ok(y)
            }
            Layer::Softmax(l) => {
                let y = softmax(x)?;
                l.cache = Some(y.clone());
                Ok(y)
            }
        }
    }

    /// Inference forward on a shared layer; batch norm uses running stats.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv2d(l) => conv2d_impl(x, &l.weight.value, Some(&l.bias.value), l.stride, l.padding, false).map(|r| r.0),
            Layer::DepthwiseConv2d(l) => super::depthwise_conv2d_forward(x, &l.weight.value, l.stride, l.padding),
            Layer::PointwiseConv2d(l) => super::pointwise_conv2d_forward(x, &l.weight.value),
            Layer::BatchNorm(l) => {
                let mut running = l.running.clone();
                batchnorm_impl(x, &l.gamma.value, &l.beta.value, l.eps, Mode::Infer, &mut running, false).map(|t| t.out)
            }
            Layer::Relu(_) => Ok(relu(x)),
            Layer::GlobalAvgPool(_) => global_avg_pool(x),
            Layer::Dense(l) => dense_forward(x, &l.weight.value, &l.bias.value),
            Layer::Softmax(_) => softmax(x),
        }
    }

    /// Reverse-mode step: accumulates parameter gradients and returns the
    /// gradient with respect to the cached input. Consumes the cache.
    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv2d(l) => l.backward(dy),
            Layer::DepthwiseConv2d(l) => l.backward(dy),
            Layer::PointwiseConv2d(l) => l.backward(dy),
            Layer::BatchNorm(l) => l.backward(dy),
            Layer::Relu(l) => l.backward(dy),
            Layer::GlobalAvgPool(l) => l.backward(dy),
            Layer::Dense(l) => l.backward(dy),
            Layer::Softmax(l) => l.backward(dy),
        }
    }

    pub fn params(&self) -> Vec<(&'static str, &Param<T>)> {
        match self {
            Layer::Conv2d(l) => vec![("weight", &l.weight), ("bias", &l.bias)],
            Layer::DepthwiseConv2d(l) => vec![("weight", &l.weight)],
            Layer::PointwiseConv2d(l) => vec![("weight", &l.weight)],
            Layer::BatchNorm(l) => vec![("gamma", &l.gamma), ("beta", &l.beta)],
            Layer::Dense(l) => vec![("weight", &l.weight), ("bias", &l.bias)],
            Layer::Relu(_) | Layer::GlobalAvgPool(_) | Layer::Softmax(_) => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Param<T>)> {
        match self {
            Layer::Conv2d(l) => vec![("weight", &mut l.weight), ("bias", &mut l.bias)],
            Layer::DepthwiseConv2d(l) => vec![("weight", &mut l.weight)],
            Layer::PointwiseConv2d(l) => vec![("weight", &mut l.weight)],
            Layer::BatchNorm(l) => vec![("gamma", &mut l.gamma), ("beta", &mut l.beta)],
            Layer::Dense(l) => vec![("weight", &mut l.weight), ("bias", &mut l.bias)],
            Layer::Relu(_) | Layer::GlobalAvgPool(_) | Layer::Softmax(_) => Vec::new(),
        }
    }

    /// Non-learned state that still belongs in a checkpoint.
    pub fn buffers(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            Layer::BatchNorm(l) => vec![("running_mean", &l.running.mean), ("running_var", &l.running.var)],
            _ => Vec::new(),
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        match self {
            Layer::BatchNorm(l) => vec![("running_mean", &mut l.running.mean), ("running_var", &mut l.running.var)],
            _ => Vec::new(),
        }
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.grad.fill(T::zero());
        }
    }

    /// Drops any cached activations.
    pub fn clear_cache(&mut self) {
        match self {
            Layer::Conv2d(l) => l.cache = None,
            Layer::DepthwiseConv2d(l) => l.cache = None,
            Layer::PointwiseConv2d(l) => l.cache = None,
            Layer::BatchNorm(l) => l.cache = None,
            Layer::Relu(l) => l.cache = None,
            Layer::GlobalAvgPool(l) => l.cache = None,
            Layer::Dense(l) => l.cache = None,
            Layer::Softmax(l) => l.cache = None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mac_counts() {
        assert_eq!(flop_count(&[LayerSpec::Dense { inputs: 10, outputs: 5 }], &[10]).unwrap(), 50);
        let conv = LayerSpec::Conv2d { in_channels: 8, out_channels: 16, kernel: 3, stride: 1, padding: 1 };
        assert_eq!(conv.macs(&[8, 32, 32]).unwrap(), 1_179_648);
        let sep = [
            LayerSpec::DepthwiseConv2d { channels: 8, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::PointwiseConv2d { in_channels: 8, out_channels: 16 },
        ];
        let sep_macs = flop_count(&sep, &[8, 32, 32]).unwrap();
        assert_eq!(sep_macs, 204_800);
        assert!((1_179_648.0 / sep_macs as f64 - 5.76).abs() < 1e-9);
    }

    #[test]
    fn unresolved_shapes() {
        let conv = LayerSpec::Conv2d { in_channels: 3, out_channels: 4, kernel: 3, stride: 1, padding: 0 };
        assert!(matches!(conv.macs(&[2, 8, 8]), Err(Error::UnresolvedShape(_))));
        assert!(matches!(flop_count(&[LayerSpec::Dense { inputs: 3, outputs: 1 }], &[4, 2, 2]), Err(Error::UnresolvedShape(_))));
    }

    #[test]
    fn backward_without_forward_is_stale() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut l = Layer::<f64>::new(&LayerSpec::Dense { inputs: 2, outputs: 2 }, &mut rng);
        assert_eq!(l.backward(&Tensor::zeros(&[1, 2])).unwrap_err(), Error::StaleCache("dense"));
        let x = Tensor::zeros(&[1, 2]);
        l.forward(&x, Mode::Train).unwrap();
        l.backward(&Tensor::zeros(&[1, 2])).unwrap();
        assert!(l.backward(&Tensor::zeros(&[1, 2])).is_err());
    }

    #[test]
    fn relu_subgradient() {
        let mut l = Layer::<f64>::Relu(Relu::default());
        let x = Tensor::from_vec(&[1, 3], alloc::vec![-1.0, 0.0, 2.0]).unwrap();
        l.forward(&x, Mode::Train).unwrap();
        let dx = l.backward(&Tensor::full(&[1, 3], 5.0)).unwrap();
        assert_eq!(dx.data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn dense_weight_gradient_is_xt_dy() {
        let mut l = Layer::Dense(Dense::new(Tensor::<f64>::zeros(&[2, 3]), Tensor::zeros(&[3])));
        let x = Tensor::from_vec(&[2, 2], alloc::vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let dy = Tensor::from_vec(&[2, 3], alloc::vec![1.0, 0.0, -1.0, 0.5, 2.0, 0.0]).unwrap();
        l.forward(&x, Mode::Train).unwrap();
        l.backward(&dy).unwrap();
        let Layer::Dense(d) = &l else { unreachable!() };
        // x^T dy
        assert_eq!(d.weight.grad.data(), &[2.5, 6.0, -1.0, 4.0, 8.0, -2.0]);
        assert_eq!(d.bias.grad.data(), &[1.5, 2.0, -1.0]);
    }

    #[test]
    fn spec_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for spec in [
            LayerSpec::Conv2d { in_channels: 2, out_channels: 3, kernel: 3, stride: 2, padding: 1 },
            LayerSpec::DepthwiseConv2d { channels: 4, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::PointwiseConv2d { in_channels: 4, out_channels: 5 },
            LayerSpec::batch_norm(4),
            LayerSpec::Relu,
            LayerSpec::GlobalAvgPool,
            LayerSpec::Dense { inputs: 3, outputs: 2 },
            LayerSpec::Softmax,
        ] {
            assert_eq!(Layer::<f32>::new(&spec, &mut rng).spec(), spec);
        }
    }
}
