//! Dense tensors, ReLU MLPs with reverse-mode gradients, Adam, and seeded
//! random streams.

mod adam;
mod mlp;
mod rng;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use mlp::{he_init, BackwardOptions, Gradients, Layer, Mlp, SupportPattern, Tape};
pub use rng::RngStream;
pub use tensor::{affine_forward, Tensor2};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite gradient in parameter block {block} at index {index}")]
    NonFinite { block: usize, index: usize },
    #[error("invalid state: {0}")]
    State(String),
    #[error("layer has zero fan-in")]
    DegenerateLayer,
}
