//! Reverse-mode automatic differentiation on dense row-major tensors.
//!
//! The engine is deliberately small: a [`Graph`] records every operation of a
//! forward pass on a tape, [`Graph::backward`] walks the tape once in reverse
//! and accumulates gradients for every reachable node. Model parameters live
//! outside the graph in a [`ParamStore`]; each training step builds a fresh
//! graph, runs backward, folds the parameter-leaf gradients back into the
//! store and applies SGD.
//!
//! Everything is generic over [`Scalar`] so that training runs in `f32` while
//! gradient-verification tests run the identical code in `f64`.

mod graph;
mod params;

pub use graph::{Graph, NodeId, TensorError};
pub use params::{ParamEntry, ParamId, ParamStore};

use std::fmt;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Element type of tensors: `f32` for training, `f64` for numeric checks.
pub trait Scalar:
    Float
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Default
    + Send
    + Sync
    + fmt::Debug
    + fmt::Display
    + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Dense row-major tensor. Rank is dynamic; the graph ops work on rank-2
/// values, convolution weights are rank-3 `[c_out, c_in, k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "tensor: shape {:?} needs {} elements, got {}",
            shape,
            numel,
            data.len()
        );
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); numel],
        }
    }

    pub fn full(shape: Vec<usize>, v: T) -> Self {
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![v; numel],
        }
    }

    pub fn scalar(v: T) -> Self {
        Self {
            shape: vec![1, 1],
            data: vec![v],
        }
    }

    pub fn from_f64_slice(shape: Vec<usize>, data: &[f64]) -> Self {
        Self::new(shape, data.iter().map(|&x| T::from_f64(x)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Rows of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "expected rank-2 tensor, shape {:?}", self.shape);
        self.shape[0]
    }

    /// Columns of a rank-2 tensor.
    pub fn cols(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "expected rank-2 tensor, shape {:?}", self.shape);
        self.shape[1]
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let c = self.cols();
        self.data[i * c + j] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Scalar payload of a 1x1 tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn t(&self) -> Tensor<T> {
        let (r, c) = (self.rows(), self.cols());
        let mut out = Tensor::zeros(vec![c, r]);
        for i in 0..r {
            for j in 0..c {
                out.data[j * r + i] = self.data[i * c + j];
            }
        }
        out
    }

    /// In-place `self += rhs`, shapes must match exactly.
    pub fn add_assign(&mut self, rhs: &Tensor<T>) {
        assert_eq!(
            self.shape, rhs.shape,
            "add_assign: shape mismatch {:?} vs {:?}",
            self.shape, rhs.shape
        );
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a += *b;
        }
    }

    pub fn fill(&mut self, v: T) {
        self.data.fill(v);
    }
}

/// `C = A * B` for row-major rank-2 tensors, the only hot kernel in the crate.
/// i-k-j loop order keeps both `B` and `C` accesses contiguous.
pub(crate) fn matmul_into<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, out: &mut Tensor<T>) {
    let (m, ka) = (a.rows(), a.cols());
    let (kb, n) = (b.rows(), b.cols());
    assert_eq!(
        ka, kb,
        "matmul: incompatible shapes {:?} x {:?}",
        a.shape, b.shape
    );
    debug_assert_eq!(out.shape(), &[m, n]);
    let ad = a.data();
    let bd = b.data();
    let od = out.data_mut();
    od.fill(T::zero());
    for i in 0..m {
        let arow = &ad[i * ka..(i + 1) * ka];
        let orow = &mut od[i * n..(i + 1) * n];
        for (k, &aik) in arow.iter().enumerate() {
            if aik == T::zero() {
                continue;
            }
            let brow = &bd[k * n..(k + 1) * n];
            for j in 0..n {
                orow[j] += aik * brow[j];
            }
        }
    }
}

pub(crate) fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let mut out = Tensor::zeros(vec![a.rows(), b.cols()]);
    matmul_into(a, b, &mut out);
    out
}
