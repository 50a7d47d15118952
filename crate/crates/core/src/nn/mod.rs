//! A small dense-tensor engine: the layer set of a MobileNet-style trunk
//! with hand-written backward passes, softmax cross-entropy and Adam.
//!
//! Tensors are NCHW, row-major. Every layer caches what its backward pass
//! needs during a training forward; calling `backward` without that cache
//! is an error rather than a silent recomputation.

mod adam;
mod layers;
mod loss;
mod ops;
mod tensor;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use layers::{
    flop_count, BatchNorm2d, Conv2d, Dense, DepthwiseConv2d, GlobalAvgPool, Layer, LayerSpec, Mode,
    Param, PointwiseConv2d, Relu, Softmax,
};
pub use loss::{cross_entropy, softmax, softmax_cross_entropy, CE_EPSILON};
pub use ops::{
    batchnorm_forward, conv2d_forward, conv_out_dim, dense_forward, depthwise_conv2d_forward,
    global_avg_pool, pointwise_conv2d_forward, relu, RunningStats,
};
pub use tensor::Tensor;

use core::fmt::{Debug, Display};
use core::iter::Sum;
use core::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Floating-point element type of tensors: `f32` for training, `f64` for
/// gradient checks.
pub trait Real:
    Float + Default + Debug + Display + Sum + AddAssign + SubAssign + MulAssign + DivAssign + Send + Sync + 'static
{
    const NAME: &'static str;
    fn cast(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    const NAME: &'static str = "f32";
    fn cast(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";
    fn cast(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}
