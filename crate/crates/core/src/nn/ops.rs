//! Pure forward kernels and the GEMM / im2col helpers the layers share.

use alloc::vec;
use alloc::vec::Vec;

use super::{Mode, Real, Tensor};
use crate::error::{Error, Result};

/// `c(m x n) += a(m x k) * b(k x n)`
pub(crate) fn gemm_nn<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aip * bv;
            }
        }
    }
}

/// `c(m x n) += a(m x k) * b(n x k)^T`
pub(crate) fn gemm_nt<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = T::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                s += x * y;
            }
            c[i * n + j] += s;
        }
    }
}

/// `c(m x n) += a(k x m)^T * b(k x n)`
pub(crate) fn gemm_tn<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let api = a[p * m + i];
            if api == T::zero() {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += api * bv;
            }
        }
    }
}

pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 || kernel > input + 2 * padding {
        return Err(Error::ShapeMismatch { op: "conv", expected: vec![kernel, stride], found: vec![input + 2 * padding] });
    }
    Ok((input + 2 * padding - kernel) / stride + 1)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Geometry {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl Geometry {
    pub fn new(c: usize, h: usize, w: usize, kh: usize, kw: usize, stride: usize, pad: usize) -> Result<Self> {
        let ho = conv_out_dim(h, kh, stride, pad)?;
        let wo = conv_out_dim(w, kw, stride, pad)?;
        Ok(Self { c, h, w, kh, kw, stride, pad, ho, wo })
    }

    pub fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    pub fn positions(&self) -> usize {
        self.ho * self.wo
    }

    /// Input coordinate for output `o` and kernel tap `k`, if inside the
    /// unpadded input.
    #[inline]
    fn src(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let i = (o * self.stride + k) as isize - self.pad as isize;
        (i >= 0 && (i as usize) < extent).then_some(i as usize)
    }
}

/// Unfolds one CHW image into a `[C*kh*kw, Ho*Wo]` column matrix.
pub(crate) fn im2col<T: Real>(x: &[T], g: &Geometry, col: &mut [T]) {
    let p = g.positions();
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut col[row * p..(row + 1) * p];
                for oh in 0..g.ho {
                    let ih = g.src(oh, ki, g.h);
                    for ow in 0..g.wo {
                        dst[oh * g.wo + ow] = match (ih, g.src(ow, kj, g.w)) {
                            (Some(ih), Some(iw)) => plane[ih * g.w + iw],
                            _ => T::zero(),
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds columns back into a CHW image.
pub(crate) fn col2im<T: Real>(col: &[T], g: &Geometry, dx: &mut [T]) {
    let p = g.positions();
    for c in 0..g.c {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &col[row * p..(row + 1) * p];
                for oh in 0..g.ho {
                    let Some(ih) = g.src(oh, ki, g.h) else { continue };
                    for ow in 0..g.wo {
                        if let Some(iw) = g.src(ow, kj, g.w) {
                            plane[ih * g.w + iw] += src[oh * g.wo + ow];
                        }
                    }
                }
            }
        }
    }
}

/// General 2-D convolution (cross-correlation) with symmetric zero padding.
/// Returns the output and, when `keep_cols`, the per-sample column matrices.
pub(crate) fn conv2d_impl<T: Real>(
    x: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
    keep_cols: bool,
) -> Result<(Tensor<T>, Vec<T>, Geometry)> {
    let (n, c, h, w) = x.dims4("conv2d")?;
    let (f, kc, kh, kw) = kernels.dims4("conv2d")?;
    if kc != c {
        return Err(Error::ShapeMismatch { op: "conv2d", expected: vec![f, c, kh, kw], found: kernels.shape().to_vec() });
    }
    if let Some(b) = bias {
        b.ensure_shape("conv2d bias", &[f])?;
    }
    let g = Geometry::new(c, h, w, kh, kw, stride, padding)?;
    let (patch, p) = (g.patch(), g.positions());
    let mut out = Tensor::zeros(&[n, f, g.ho, g.wo]);
    let mut cols = if keep_cols { vec![T::zero(); n * patch * p] } else { Vec::new() };
    let mut scratch = if keep_cols { Vec::new() } else { vec![T::zero(); patch * p] };
    for s in 0..n {
        let col: &mut [T] = if keep_cols { &mut cols[s * patch * p..(s + 1) * patch * p] } else { &mut scratch };
        im2col(&x.data()[s * c * h * w..(s + 1) * c * h * w], &g, col);
        let o = &mut out.data_mut()[s * f * p..(s + 1) * f * p];
        if let Some(b) = bias {
            for (fi, &bv) in b.data().iter().enumerate() {
                o[fi * p..(fi + 1) * p].iter_mut().for_each(|v| *v = bv);
            }
        }
        gemm_nn(f, patch, p, kernels.data(), col, o);
    }
    Ok((out, cols, g))
}

pub fn conv2d_forward<T: Real>(
    x: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    conv2d_impl(x, kernels, Some(bias), stride, padding, false).map(|r| r.0)
}

/// One `kh x kw` filter per input channel; kernels are `[C, kh, kw]`.
pub fn depthwise_conv2d_forward<T: Real>(
    x: &Tensor<T>,
    kernels: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4("depthwise_conv2d")?;
    let (kc, kh, kw) = match kernels.shape()[..] {
        [a, b, d] => (a, b, d),
        _ => return Err(Error::ShapeMismatch { op: "depthwise_conv2d", expected: vec![c, 0, 0], found: kernels.shape().to_vec() }),
    };
    if kc != c {
        return Err(Error::ShapeMismatch { op: "depthwise_conv2d", expected: vec![c, kh, kw], found: kernels.shape().to_vec() });
    }
    let g = Geometry::new(c, h, w, kh, kw, stride, padding)?;
    let mut out = Tensor::zeros(&[n, c, g.ho, g.wo]);
    let (hw, p) = (h * w, g.positions());
    for s in 0..n {
        for ch in 0..c {
            let plane = &x.data()[(s * c + ch) * hw..(s * c + ch + 1) * hw];
            let k = &kernels.data()[ch * kh * kw..(ch + 1) * kh * kw];
            let o = &mut out.data_mut()[(s * c + ch) * p..(s * c + ch + 1) * p];
            depthwise_plane(plane, k, &g, o);
        }
    }
    Ok(out)
}

pub(crate) fn depthwise_plane<T: Real>(plane: &[T], k: &[T], g: &Geometry, o: &mut [T]) {
    for ki in 0..g.kh {
        for kj in 0..g.kw {
            let wv = k[ki * g.kw + kj];
            for oh in 0..g.ho {
                let Some(ih) = g.src(oh, ki, g.h) else { continue };
                let row = &plane[ih * g.w..(ih + 1) * g.w];
                let orow = &mut o[oh * g.wo..(oh + 1) * g.wo];
                for (ow, ov) in orow.iter_mut().enumerate() {
                    if let Some(iw) = g.src(ow, kj, g.w) {
                        *ov += wv * row[iw];
                    }
                }
            }
        }
    }
}

/// Per-pixel linear map across channels; kernels are `[F, C]`.
pub fn pointwise_conv2d_forward<T: Real>(x: &Tensor<T>, kernels: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4("pointwise_conv2d")?;
    let (f, kc) = kernels.dims2("pointwise_conv2d")?;
    if kc != c {
        return Err(Error::ShapeMismatch { op: "pointwise_conv2d", expected: vec![f, c], found: kernels.shape().to_vec() });
    }
    let hw = h * w;
    let mut out = Tensor::zeros(&[n, f, h, w]);
    for s in 0..n {
        gemm_nn(
            f,
            c,
            hw,
            kernels.data(),
            &x.data()[s * c * hw..(s + 1) * c * hw],
            &mut out.data_mut()[s * f * hw..(s + 1) * f * hw],
        );
    }
    Ok(out)
}

/// Running per-channel statistics of a batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
    pub momentum: f64,
}

impl<T: Real> RunningStats<T> {
    pub fn new(channels: usize, momentum: f64) -> Self {
        Self { mean: Tensor::zeros(&[channels]), var: Tensor::full(&[channels], T::one()), momentum }
    }
}

pub(crate) struct BnTrace<T> {
    pub out: Tensor<T>,
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
}

#[allow(clippy::needless_range_loop)]
pub(crate) fn batchnorm_impl<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
    mode: Mode,
    running: &mut RunningStats<T>,
    update_running: bool,
) -> Result<BnTrace<T>> {
    let (n, c, h, w) = x.dims4("batchnorm")?;
    gamma.ensure_shape("batchnorm gamma", &[c])?;
    beta.ensure_shape("batchnorm beta", &[c])?;
    running.mean.ensure_shape("batchnorm running mean", &[c])?;
    let hw = h * w;
    let count = T::cast((n * hw) as f64);
    let eps_t = T::cast(eps);
    let mut out = Tensor::zeros(x.shape());
    let mut xhat = vec![T::zero(); x.len()];
    let mut inv_std = vec![T::zero(); c];
    for ch in 0..c {
        let idx = |s: usize| (s * c + ch) * hw..(s * c + ch + 1) * hw;
        let (mean, var) = match mode {
            Mode::Train => {
                let mut sum = T::zero();
                for s in 0..n {
                    sum += x.data()[idx(s)].iter().copied().sum::<T>();
                }
                let mean = sum / count;
                let mut sq = T::zero();
                for s in 0..n {
                    sq += x.data()[idx(s)].iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
                }
                let var = sq / count;
                if update_running {
                    let m = T::cast(running.momentum);
                    let rm = &mut running.mean.data_mut()[ch];
                    *rm = m * *rm + (T::one() - m) * mean;
                    let rv = &mut running.var.data_mut()[ch];
                    *rv = m * *rv + (T::one() - m) * var;
                }
                (mean, var)
            }
            Mode::Infer => (running.mean.data()[ch], running.var.data()[ch]),
        };
        let is = T::one() / (var + eps_t).sqrt();
        inv_std[ch] = is;
        let (g, b) = (gamma.data()[ch], beta.data()[ch]);
        for s in 0..n {
            for i in idx(s) {
                let xh = (x.data()[i] - mean) * is;
                xhat[i] = xh;
                out.data_mut()[i] = g * xh + b;
            }
        }
    }
    Ok(BnTrace { out, xhat, inv_std })
}

/// Per-channel normalization over (N, H, W). Train mode uses batch
/// statistics and folds them into `running`; infer mode uses `running`.
pub fn batchnorm_forward<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
    mode: Mode,
    running: &mut RunningStats<T>,
) -> Result<Tensor<T>> {
    batchnorm_impl(x, gamma, beta, eps, mode, running, true).map(|t| t.out)
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| {
        if *v <= T::zero() {
            *v = T::zero()
        }
    });
    y
}

/// Mean over (H, W): `[N, C, H, W] -> [N, C]`.
pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4("global_avg_pool")?;
    let hw = h * w;
    let inv = T::one() / T::cast(hw as f64);
    let data = x.data().chunks_exact(hw).map(|p| p.iter().copied().sum::<T>() * inv).collect();
    Tensor::from_vec(&[n, c], data)
}

/// `y = x W + b` with `x: [N, in]`, `W: [in, out]`, `b: [out]`.
pub fn dense_forward<T: Real>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, d_in) = x.dims2("dense")?;
    let (w_in, d_out) = weight.dims2("dense")?;
    if w_in != d_in {
        return Err(Error::ShapeMismatch { op: "dense", expected: vec![d_in, d_out], found: weight.shape().to_vec() });
    }
    bias.ensure_shape("dense bias", &[d_out])?;
    let mut y = Tensor::zeros(&[n, d_out]);
    for row in y.data_mut().chunks_exact_mut(d_out) {
        row.copy_from_slice(bias.data());
    }
    gemm_nn(n, d_in, d_out, x.data(), weight.data(), y.data_mut());
    Ok(y)
}
