//! The MM-ResGNN architecture: grouped edge encoder, stacked edge-aware
//! multi-head attention layers with adaptive edge-node fusion, a compact
//! convolutional visual branch, gated cross-modal fusion and the residual
//! regression head. All layers carry hand-derived backward passes so the
//! same code runs in f32 for training and f64 for gradient verification.

pub mod checkpoint;
pub mod config;
pub mod model;
pub mod nn;
pub mod params;
pub mod scalar;
pub mod tensorize;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, RawTargetStats};
pub use config::{BackboneKind, FeatureMask, FusionKind, GnnOperator, ModelConfig};
pub use model::{Model, ModelDiagnostics};
pub use params::{AdamW, Grads, ParamGroup, ParamStore};
pub use scalar::Scalar;
pub use tensorize::{tensorize_graph, GraphTensors, TargetMode};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("node {0} has no in-neighbors; the graph is not a valid ESPL graph")]
    IsolatedNode(usize),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;
