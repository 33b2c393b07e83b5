//! Numeric arrays, reverse-mode differentiation, and the convolutional
//! classifier built from them.

use thiserror::Error;

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod optim;
pub mod tensor;

pub use checkpoint::{Checkpoint, CheckpointHeader};
pub use graph::{BatchStats, Gradients, Graph, Var};
pub use model::{pack_batch, param_count, ConvNet, ModelConfig, Mode};
pub use optim::Adam;
pub use tensor::{Float, Tensor};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalarLoss(Vec<usize>),
    #[error("batch normalization in training mode needs at least 2 samples, got {0}")]
    BatchTooSmall(usize),
    #[error("sequence length of zero")]
    ZeroLength,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
