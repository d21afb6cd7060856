//! GraPhy layers: diffusion, convection and local graph modules combined by a
//! softmax fusion head, plus full-model forward, inference and persistence.

mod batch;
mod config;
mod convection;
mod diffusion;
mod fusion;
mod graphy;
mod inference;
mod local;
pub mod persist;

pub use batch::{Batch, GraphContext, NodeWindow, Normalizer, EDGE_FEATURES};
pub use config::{Aggregation, FusionMode, LocalNorm, ModelConfig, Preset};
pub use convection::{ConvectionModule, EdgeAffine};
pub use diffusion::DiffusionModule;
pub use fusion::{FusionHead, FusionOutput};
pub use graphy::{GraPhyLayer, GraPhyModel, LayerTrace};
pub use inference::{infer_at_location, predict_node, ContextSnapshot};
pub use local::LocalModule;

use crate::autodiff::TensorError;
use crate::geo::GeoError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("expected {expected} nodes, got {got}")]
    NodeMismatch { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("new location {0} coincides with an existing sensor id")]
    DuplicateLocation(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Checkpoint(#[from] crate::autodiff::checkpoint::CheckpointError),
    #[error("sidecar {path}: {message}")]
    Sidecar { path: String, message: String },
}
