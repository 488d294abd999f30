//! Dense multi-dimensional f64 arrays and reverse-mode automatic
//! differentiation.
//!
//! [`Tensor`] is a plain value type: a shape plus row-major data. All
//! differentiable computation happens through a [`Graph`](graph::Graph),
//! a dynamic tape that records every operation during the forward pass and
//! replays it in reverse to accumulate gradients. Everything is 64-bit;
//! speed is irrelevant at this scale and gradient checks want the
//! precision.

pub mod check;
pub mod graph;

pub use graph::{Graph, NodeId};

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Norms below this are treated as zero by [`cosine_value`]; the cosine of
/// a degenerate vector is defined as 0 with zero gradient so that freshly
/// zero-initialized projections cannot poison training with NaNs.
pub const COSINE_NORM_EPS: f64 = 1e-12;

/// A dense tensor: positive extents, row-major f64 data, and an optional
/// gradient buffer of the same shape populated by a graph's backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    /// Builds a tensor, validating that the shape has positive extents and
    /// matches the data length.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Dimension(format!(
                "tensor shape must have positive extents, got {shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} implies {numel} elements, data has {}",
                data.len()
            )));
        }
        Ok(Self {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product::<usize>().max(1);
        Self {
            shape,
            data: vec![0.0; numel],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
            requires_grad: false,
            grad: None,
        }
    }

    /// Gaussian-initialized tensor, the init used for all fresh weights.
    pub fn randn<R: Rng>(shape: Vec<usize>, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("std must be finite and positive");
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| normal.sample(rng)).collect();
        Self {
            shape,
            data,
            requires_grad: false,
            grad: None,
        }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    /// Gradient buffer, present after a backward pass wrote one here.
    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Installs a gradient buffer; its length must match the data.
    pub fn set_grad(&mut self, grad: Vec<f64>) {
        assert_eq!(grad.len(), self.data.len(), "grad length must match data");
        self.grad = Some(grad);
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single element of a scalar tensor.
    pub fn item(&self) -> Result<f64> {
        if !self.is_scalar() {
            return Err(Error::Contract(format!(
                "item() needs a scalar tensor, got shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Plain cosine similarity between two equal-length slices, computed as a
/// normalized dot product. Returns 0 when either norm is below
/// [`COSINE_NORM_EPS`]. This is the single definition shared by the
/// differentiable graph op and by inference.
pub fn cosine_value(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v.iter()) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    let nu = nu.sqrt();
    let nv = nv.sqrt();
    if nu < COSINE_NORM_EPS || nv < COSINE_NORM_EPS {
        return 0.0;
    }
    dot / (nu * nv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_zero_extent() {
        assert!(Tensor::new(vec![0, 2], vec![]).is_err());
    }

    #[test]
    fn new_rejects_length_mismatch() {
        assert!(Tensor::new(vec![2, 2], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn item_rejects_non_scalar() {
        let t = Tensor::vector(vec![1.0, 2.0]);
        assert!(t.item().is_err());
    }

    #[test]
    fn cosine_identical_vectors() {
        assert_eq!(cosine_value(&[1.0, 0.0], &[1.0, 0.0]), 1.0);
    }

    #[test]
    fn cosine_orthogonal_vectors() {
        assert_eq!(cosine_value(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
    }

    #[test]
    fn cosine_scalar_oracle() {
        // (1*2 + 2*1) / (sqrt(5) * sqrt(5)) = 4/5
        let got = cosine_value(&[1.0, 2.0], &[2.0, 1.0]);
        assert!((got - 0.8).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn cosine_zero_norm_guard() {
        assert_eq!(cosine_value(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
    }
}
