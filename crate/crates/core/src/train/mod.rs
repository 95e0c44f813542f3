//! Training loops, run configuration, and the bundled model artifact.
//!
//! Two loops cover the two operating modes:
//!
//! * [`train_unsupervised`] alternates, each step, between solving the
//!   configured coupling/penalty on freshly projected encoder outputs and an
//!   Adam update of the encoders, projections, and (for reference-based
//!   penalties) the learned reference batches.
//! * [`train_semisupervised`] combines a cross-entropy term on a labeled
//!   aligned mini-batch with the weighted multi-view penalty and an optional
//!   autoencoder reconstruction term on unlabeled per-view batches, updating
//!   every component jointly.
//!
//! Both loops are fully deterministic given `(dataset, config)`: every
//! random choice flows from per-purpose seeds derived from the run seed in a
//! fixed order.

mod config;
mod loops;
mod model;
mod report;

pub use config::TrainConfig;
pub use loops::{train_semisupervised, train_unsupervised};
pub use model::TrainedModel;
pub use report::{EpochRecord, TrainReport};

use thiserror::Error;

use crate::data::DataError;
use crate::nn::NnError;
use crate::ot::OtError;
use crate::regularizers::{RegError, RegularizerKind};

/// Errors from configuration, training, prediction, and model persistence.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("batch size {batch} exceeds the {pool}-sample pool (no full batch fits)")]
    BatchTooLarge { batch: usize, pool: usize },

    #[error("the `{0}` regularizer needs sample-aligned views, but the training pool is unaligned")]
    NeedsAlignedData(RegularizerKind),

    #[error("semisupervised training needs a nonempty labeled pool")]
    NoLabeledPool,

    #[error("semisupervised training needs a nonempty unlabeled pool")]
    NoUnlabeledPool,

    #[error("the labeled pool carries no labels")]
    MissingLabels,

    #[error("the labeled pool does not declare a class count")]
    MissingClassCount,

    #[error("this model has no classifier head")]
    NoClassifier,

    #[error("dataset mismatch: {0}")]
    DatasetMismatch(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Nn(#[from] NnError),

    #[error(transparent)]
    Reg(#[from] RegError),

    #[error(transparent)]
    Ot(#[from] OtError),

    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T> = std::result::Result<T, TrainError>;
