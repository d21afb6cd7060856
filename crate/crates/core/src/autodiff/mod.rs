//! Dense tensors, reverse-mode differentiation, MLP blocks and Adam.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod mlp;
mod param;
mod tape;
mod tensor;

pub use adam::Adam;
pub use gradcheck::{finite_diff_grad, max_relative_error};
pub use mlp::{Dense, Mlp};
pub use param::{Param, ParamId, ParamStore};
pub use tape::{edge_index, Activation, Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("shape {shape:?} does not hold {len} values")]
    InvalidShape { shape: Vec<usize>, len: usize },
    #[error("expected a single-element tensor, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("{op}: range {start}..{end} out of bounds for length {len}")]
    Range { op: &'static str, start: usize, end: usize, len: usize },
    #[error("invalid {0}")]
    Empty(&'static str),
    #[error("missing entry {0}")]
    MissingEntry(String),
}
