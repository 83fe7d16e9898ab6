//! Dense tensors, a reverse-mode tape, and the Adam optimizer.
//!
//! Everything the generator computes is a 2-D row-major matrix on a [`Tape`];
//! vectors are `1 x n` and scalars are `1 x 1`. Only exact-shape and scalar
//! broadcasting are supported, every other shape-changing operation has its
//! own op with its own gradient rule.

mod adam;
mod real;
mod tape;
mod tensor;

pub use adam::{clip_grad_norm, Adam, AdamConfig};
pub use real::Real;
pub use tape::{Tape, TapeMark, Var};
pub use tensor::{ParamStore, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid mask in {op}: every position is masked")]
    InvalidMask { op: &'static str },
    #[error("numerically degenerate input in {op}: {detail}")]
    Degenerate { op: &'static str, detail: String },
    #[error("index {index} out of range for {op} (size {size})")]
    Index {
        op: &'static str,
        index: usize,
        size: usize,
    },
    #[error("invalid state: {0}")]
    State(String),
}

pub type Result<T> = std::result::Result<T, NumericsError>;
