//! Multi-view co-regularization losses.
//!
//! All six regularizers act on per-view latent batches `Z_s` (`d x B`,
//! columns are samples) and expose analytic gradients with respect to the
//! latents and, where applicable, a set of trainable reference batches
//! `G_k`. The families:
//!
//! - **Distance baselines** ([`lscca_loss`], [`gdcca_loss`]): squared
//!   Frobenius distances between aligned latent batches (pairwise, or to a
//!   single shared reference). These require sample-aligned batches.
//! - **Sliced baselines** ([`sw_pairwise_loss`], [`sw_reference_loss`]):
//!   replace the Frobenius distance with the sliced Wasserstein distance, so
//!   alignment is no longer needed.
//! - **Transport-coupled losses** ([`hot_pairwise_loss`],
//!   [`hot_reference_loss`]): weight the pairwise (or view-to-reference)
//!   sliced distances by an entropic transport plan solved on the current
//!   cost matrix. The plan is *fixed* during differentiation — gradients flow
//!   through the costs only, never through the Sinkhorn solve.
//!
//! Every loss adds `alpha` times an orthogonality penalty
//! ([`ortho_penalty`]) that keeps the summed (batch-normalized) Gram matrix
//! close to the identity: on the latents for the pairwise losses, on the
//! references for the reference losses, mirroring which objects the original
//! hard constraints bound.

mod baselines;
mod hot;
mod ortho;
mod references;
mod sliced;

pub use baselines::{gdcca_loss, lscca_loss};
pub use hot::{
    hot_pairwise_loss, hot_pairwise_with_plan, hot_reference_loss, hot_reference_with_plan,
    solve_pairwise_coupling, solve_reference_coupling,
};
pub use ortho::ortho_penalty;
pub use references::ReferenceSet;
pub use sliced::{sw_pairwise_loss, sw_reference_loss};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ot::{CostMatrix, OtError, ProjectionSet, TransportPlan};

/// Errors from regularizer evaluation.
#[derive(Debug, Error)]
pub enum RegError {
    #[error("this regularizer requires sample-aligned batches")]
    UnalignedBatch,

    #[error("regularizer needs at least {needed} views, got {got}")]
    TooFewViews { needed: usize, got: usize },

    #[error("latent batch {index} is {got_rows}x{got_cols}, expected {rows}x{cols}")]
    LatentShapeMismatch {
        index: usize,
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },

    #[error("reference {index} is {got_rows}x{got_cols}, expected {rows}x{cols}")]
    RefShapeMismatch {
        index: usize,
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },

    #[error("expected exactly {expected} reference(s), got {got}")]
    RefCountMismatch { expected: usize, got: usize },

    #[error("this regularizer needs references but none were provided")]
    MissingReferences,

    #[error("transport plan is {got_rows}x{got_cols}, expected {rows}x{cols}")]
    PlanShapeMismatch {
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },

    #[error(transparent)]
    Ot(#[from] OtError),
}

pub type Result<T> = std::result::Result<T, RegError>;

/// Which co-regularizer a training run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    Lscca,
    Gdcca,
    SwPairwise,
    SwReference,
    HotPairwise,
    HotReference,
    None,
}

impl RegularizerKind {
    /// How many reference batches this kind trains: `None` for pairwise
    /// losses, `Some(1)` for single-reference losses, and
    /// `Some(num_clusters)` for the transport reference loss.
    pub fn reference_count(&self, num_clusters: usize) -> Option<usize> {
        match self {
            RegularizerKind::Gdcca | RegularizerKind::SwReference => Some(1),
            RegularizerKind::HotReference => Some(num_clusters),
            _ => None,
        }
    }

    /// Distance baselines compare samples positionally and therefore need
    /// aligned batches.
    pub fn requires_alignment(&self) -> bool {
        matches!(self, RegularizerKind::Lscca | RegularizerKind::Gdcca)
    }

    /// Whether this kind compares distributions with sliced distances (and
    /// hence needs a projection set).
    pub fn uses_projections(&self) -> bool {
        matches!(
            self,
            RegularizerKind::SwPairwise
                | RegularizerKind::SwReference
                | RegularizerKind::HotPairwise
                | RegularizerKind::HotReference
        )
    }
}

impl std::fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            RegularizerKind::Lscca => "lscca",
            RegularizerKind::Gdcca => "gdcca",
            RegularizerKind::SwPairwise => "sw_pairwise",
            RegularizerKind::SwReference => "sw_reference",
            RegularizerKind::HotPairwise => "hot_pairwise",
            RegularizerKind::HotReference => "hot_reference",
            RegularizerKind::None => "none",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for RegularizerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lscca" => Ok(RegularizerKind::Lscca),
            "gdcca" => Ok(RegularizerKind::Gdcca),
            "sw_pairwise" => Ok(RegularizerKind::SwPairwise),
            "sw_reference" => Ok(RegularizerKind::SwReference),
            "hot_pairwise" => Ok(RegularizerKind::HotPairwise),
            "hot_reference" => Ok(RegularizerKind::HotReference),
            "none" => Ok(RegularizerKind::None),
            other => Err(format!(
                "unknown regularizer `{other}` (expected lscca|gdcca|sw_pairwise|sw_reference|hot_pairwise|hot_reference|none)"
            )),
        }
    }
}

/// Loss value and gradients from one regularizer evaluation.
#[derive(Debug)]
pub struct RegularizerOutput {
    pub loss: f64,
    /// One gradient per latent batch, same shapes as the inputs.
    pub latent_grads: Vec<Array2<f64>>,
    /// One gradient per reference batch; empty for reference-free losses.
    pub ref_grads: Vec<Array2<f64>>,
    /// The transport plan, for the transport-coupled losses.
    pub plan: Option<TransportPlan>,
    /// The cost matrix the plan was solved on (diagonal-shifted for the
    /// pairwise loss).
    pub cost: Option<CostMatrix>,
}

/// Everything a regularizer evaluation may need; the training loop fills
/// this in once per step and dispatches on the configured kind.
pub struct RegularizerInputs<'a> {
    pub latents: &'a [Array2<f64>],
    pub refs: Option<&'a ReferenceSet>,
    pub proj: &'a ProjectionSet,
    pub alpha: f64,
    pub beta: f64,
    pub sinkhorn_iters: usize,
    /// Whether the latent batches are sample-aligned across views.
    pub aligned: bool,
}

/// Evaluates the configured regularizer. `RegularizerKind::None` yields a
/// zero loss with zero gradients.
pub fn evaluate(kind: RegularizerKind, inputs: &RegularizerInputs<'_>) -> Result<RegularizerOutput> {
    let refs = || inputs.refs.ok_or(RegError::MissingReferences);
    match kind {
        RegularizerKind::Lscca => lscca_loss(inputs.latents, inputs.alpha, inputs.aligned),
        RegularizerKind::Gdcca => {
            gdcca_loss(inputs.latents, refs()?, inputs.alpha, inputs.aligned)
        }
        RegularizerKind::SwPairwise => {
            sw_pairwise_loss(inputs.latents, inputs.proj, inputs.alpha)
        }
        RegularizerKind::SwReference => {
            sw_reference_loss(inputs.latents, refs()?, inputs.proj, inputs.alpha)
        }
        RegularizerKind::HotPairwise => hot_pairwise_loss(
            inputs.latents,
            inputs.proj,
            inputs.alpha,
            inputs.beta,
            inputs.sinkhorn_iters,
        ),
        RegularizerKind::HotReference => hot_reference_loss(
            inputs.latents,
            refs()?,
            inputs.proj,
            inputs.alpha,
            inputs.beta,
            inputs.sinkhorn_iters,
        ),
        RegularizerKind::None => Ok(RegularizerOutput {
            loss: 0.0,
            latent_grads: inputs
                .latents
                .iter()
                .map(|z| Array2::zeros(z.dim()))
                .collect(),
            ref_grads: Vec::new(),
            plan: None,
            cost: None,
        }),
    }
}

/// Validates that all matrices share the row dimension `d` (widths may
/// differ); returns `d`. Used by the orthogonality penalty, whose inputs are
/// normalized per-matrix.
pub(crate) fn check_latent_shapes_loose(mats: &[&Array2<f64>]) -> Result<usize> {
    if mats.is_empty() {
        return Err(RegError::TooFewViews { needed: 1, got: 0 });
    }
    let d = mats[0].nrows();
    for (index, m) in mats.iter().enumerate() {
        if m.nrows() != d {
            return Err(RegError::LatentShapeMismatch {
                index,
                rows: d,
                cols: m.ncols(),
                got_rows: m.nrows(),
                got_cols: m.ncols(),
            });
        }
    }
    Ok(d)
}

/// Validates that all latent batches share one `d x B` shape; returns it.
pub(crate) fn check_latent_shapes(latents: &[Array2<f64>]) -> Result<(usize, usize)> {
    if latents.is_empty() {
        return Err(RegError::TooFewViews { needed: 1, got: 0 });
    }
    let shape = latents[0].dim();
    for (index, z) in latents.iter().enumerate() {
        if z.dim() != shape {
            return Err(RegError::LatentShapeMismatch {
                index,
                rows: shape.0,
                cols: shape.1,
                got_rows: z.nrows(),
                got_cols: z.ncols(),
            });
        }
    }
    Ok(shape)
}
