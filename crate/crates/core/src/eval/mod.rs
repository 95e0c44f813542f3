//! Metrics and experiment harnesses: classification accuracy, view-cluster
//! recovery scoring, transport-plan export for heatmaps, and the
//! view-ablation study.

mod ablation;
mod heatmap;
mod metrics;

pub use ablation::{run_ablation, AblationReport, AblationRow};
pub use heatmap::{export_plan_heatmap, read_plan_heatmap, PlanHeatmap};
pub use metrics::{accuracy, adjusted_rand_index, cluster_recovery};

use thiserror::Error;

use crate::data::DataError;
use crate::ot::OtError;
use crate::train::TrainError;

/// Errors from metric computation, ablation runs, and plan export.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{preds} predictions but {truth} ground-truth labels")]
    LengthMismatch { preds: usize, truth: usize },

    #[error("empty input")]
    Empty,

    #[error("plan has {rows} rows but {planted} planted assignments")]
    PlanRowMismatch { rows: usize, planted: usize },

    #[error("an ablation study needs at least two views (got {0})")]
    TooFewViews(usize),

    #[error("an ablation study needs at least one trial")]
    NoTrials,

    #[error("{rows} row names for a {expected}-row plan")]
    NameCountMismatch { rows: usize, expected: usize },

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    BadFile { path: String, message: String },

    #[error(transparent)]
    Train(#[from] TrainError),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Ot(#[from] OtError),
}

pub type Result<T> = std::result::Result<T, EvalError>;
