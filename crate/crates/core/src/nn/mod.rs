//! Minimal tensor and layer engine: the layer kinds of the clutter network,
//! reverse-mode gradients through a sequential stack, and Adam.

mod adam;
pub mod gradcheck;
mod loss;
mod network;
pub mod ops;
mod scalar;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{
    binary_cross_entropy, binary_cross_entropy_with_logits, cross_entropy,
    cross_entropy_with_logits, head_loss, sigmoid, softmax, Head,
};
pub use network::{Layer, LayerKind, Mode, NamedTensor, Network};
pub use ops::{conv2d_forward, dropout_forward, fully_connected_forward, maxpool_forward};
pub use scalar::Real;
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid layer configuration: {0}")]
    Config(String),
    #[error("batch norm in training mode needs at least 2 samples, got {0}")]
    BatchTooSmall(usize),
    #[error("backward called without a recorded forward pass")]
    BackwardWithoutForward,
    #[error("non-finite gradient in parameter {parameter}; update skipped")]
    NonFiniteGradient { parameter: usize },
    #[error("parameter {0} has no gradient")]
    MissingGradient(usize),
    #[error("invalid target: {0}")]
    Target(String),
}
