//! Dense matrices and a small reverse-mode autodiff graph.
//!
//! The graph supports exactly what the extractor and the NADE need:
//! matmul, add, bias-over-rows broadcast, scale, sigmoid, ReLU, column
//! concat and slice, a temporal unfold used for convolutions, mean, and a
//! fused softmax cross-entropy. There is no other broadcasting; shape
//! mismatches are errors.

mod graph;
mod matrix;
pub mod ops;

pub use graph::{Gradients, Graph, NodeId};
pub(crate) use matrix::add_vec_mat;
pub use matrix::Matrix;
pub use ops::{argmax, cross_entropy, log_sum_exp, sigmoid, softmax};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{rows}x{cols} matrix cannot hold {len} values")]
    DataLength {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("row {row} has a different length from row 0")]
    RaggedRows { row: usize },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("slice {start}+{len} exceeds extent {extent}")]
    SliceOutOfRange {
        start: usize,
        len: usize,
        extent: usize,
    },
    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },
    #[error("backward needs a 1x1 root, got {0:?}")]
    NonScalarRoot((usize, usize)),
    #[error("kernel width {0} must be odd")]
    EvenKernel(usize),
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        TensorError::ShapeMismatch { op, left, right }
    }
}
