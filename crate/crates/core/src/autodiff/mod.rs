//! Tape-based reverse-mode differentiation over dense `f64` tensors.
//!
//! The engine knows exactly the operators the network and Grad-CAM need:
//! 1D convolution, batch normalization, ReLU, flatten, affine and softmax
//! cross-entropy. Every op appends one node to a [`Tape`]; [`Tape::backward`]
//! sweeps the nodes in reverse and accumulates into each slot's gradient
//! buffer until [`Tape::zero_grad`] is called.
//!
//! Activations may carry a leading batch axis: conv/BN/ReLU accept `(C, T)`
//! or `(N, C, T)`, affine and softmax accept `(F)` or `(N, F)`.

mod ops;
mod params;
mod tape;

use thiserror::Error;

pub use params::{AffineParams, BnParams, ConvParams};
pub use tape::{BatchStats, Tape, Var};

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("tape corrupted: {0}")]
    TapeCorrupted(String),
    #[error("seed gradient has {got} values, output has {expected}")]
    SeedShapeMismatch { expected: usize, got: usize },
    #[error("target class {class} out of range for {classes} classes")]
    InvalidTarget { class: usize, classes: usize },
}

/// Batch-norm behaviour: batch statistics while training, running statistics otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Dense row-major array with a same-shaped gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, AutodiffError> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(AutodiffError::ShapeMismatch(format!(
                "shape {shape:?} holds {n} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            grad: vec![0.0; n],
            shape,
            values,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            values: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        let n = values.len();
        Self {
            shape: vec![n],
            grad: vec![0.0; n],
            values,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        &mut self.grad
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Copy of the values with a fresh zero gradient.
    pub fn detached(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            values: self.values.clone(),
            grad: vec![0.0; self.values.len()],
        }
    }
}
