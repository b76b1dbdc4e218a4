//! Differentiable building blocks with hand-written adjoints.
//!
//! Every layer exposes `forward` over a batch of samples (normalization
//! statistics are shared across the batch) returning a tape, and `backward`
//! consuming that tape. Gradients come back in a value of the layer's own
//! type: learnable tensors hold gradients, running statistics are unused.

mod head;
mod norm;
mod pair;
mod pointwise;
mod pool;

pub use head::{Head, HeadTape, DROPOUT};
pub use norm::{BatchNorm, NormStats};
pub use pair::{PairConv, PairConvTape, PairInput, Variant};
pub use pointwise::{PointConv, PointConvTape};
pub use pool::{global_maxpool, global_maxpool_backward};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Negative slope of the leaky rectifier used after every normalized stage.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    Leaky(f64),
}

impl Activation {
    #[inline]
    pub fn apply(self, y: f64) -> f64 {
        match self {
            Activation::Identity => y,
            Activation::Leaky(s) => {
                if y > 0.0 {
                    y
                } else {
                    s * y
                }
            }
        }
    }

    #[inline]
    pub fn derivative(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Leaky(s) => {
                if y > 0.0 {
                    1.0
                } else {
                    s
                }
            }
        }
    }
}

/// Flat access to learnable tensors and non-learnable buffers, in a fixed
/// order shared by parameters and gradients.
pub trait Learnable {
    fn tensors(&self) -> Vec<(String, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;
    fn buffers(&self) -> Vec<(String, &[f64])> {
        Vec::new()
    }
    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        Vec::new()
    }
}

pub(crate) fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("contiguous")
}

pub(crate) fn slice2(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("contiguous")
}

pub(crate) fn slice1_mut(a: &mut Array1<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("contiguous")
}

pub(crate) fn slice2_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("contiguous")
}

/// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub(crate) fn fan_in_uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut Rng) -> Array2<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.uniform_range(-bound, bound))
}

pub(crate) fn fan_in_uniform_vec(len: usize, fan_in: usize, rng: &mut Rng) -> Array1<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array1::from_shape_simple_fn(len, || rng.uniform_range(-bound, bound))
}
