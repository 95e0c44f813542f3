//! Minimal dense networks with explicit forward/backward passes.
//!
//! Everything here is deliberately small and transparent: parameters are
//! plain `ndarray` matrices (biases are `out x 1` columns broadcast over the
//! batch), gradients are computed by hand, and the optimizer state is keyed
//! by stable tensor names so checkpoints, gradient plumbing, and error
//! messages all speak the same language. Batches are laid out
//! features-by-samples (`d x B`).

mod adam;
mod checkpoint;
mod loss;
mod mlp;
mod stack;

pub use adam::{accumulate, Adam, GradStore};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use loss::{reconstruction_loss, softmax_xent, ReconstructionOutput};
pub use mlp::{Linear, LinearGrads, Mlp, MlpCache, MlpGrads, LEAKY_SLOPE};
pub use stack::{ClassifierHead, DecoderStack, EncoderStack};

use thiserror::Error;

/// Errors from network construction, passes, optimization, and checkpoints.
#[derive(Debug, Error)]
pub enum NnError {
    #[error("input has {got} rows but the layer expects {expected}")]
    InputDimMismatch { expected: usize, got: usize },

    #[error("gradient is {got_rows}x{got_cols} but the output is {rows}x{cols}")]
    OutputGradMismatch {
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },

    #[error("backward cache does not match this network (expected {expected} layers, cache has {got})")]
    StaleCache { expected: usize, got: usize },

    #[error("a network needs at least one layer (got dims of length {0})")]
    TooFewDims(usize),

    #[error("label {label} at position {index} is out of range for {classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },

    #[error("batch has {logits} columns but {labels} labels")]
    LabelCountMismatch { logits: usize, labels: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("view count mismatch: stack has {expected} views, got {got} inputs")]
    ViewCountMismatch { expected: usize, got: usize },

    #[error("non-finite gradient for parameter `{name}`")]
    NonFiniteGradient { name: String },

    #[error("gradient for `{name}` is {got_rows}x{got_cols} but the parameter is {rows}x{cols}")]
    GradShapeMismatch {
        name: String,
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },

    #[error("gradient provided for unknown parameter `{name}`")]
    UnknownParameter { name: String },

    #[error("checkpoint i/o: {0}")]
    CheckpointIo(#[from] std::io::Error),

    #[error("checkpoint is corrupt: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint is missing tensor `{name}`")]
    MissingTensor { name: String },
}

pub type Result<T> = std::result::Result<T, NnError>;
