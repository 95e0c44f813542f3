//! Optimal-transport primitives: sliced Wasserstein distances, entropic
//! transport plans, and a brute-force matching oracle.
//!
//! The empirical sliced Wasserstein distance between two `d x n` sample
//! batches `X`, `Y` uses `M` random unit directions `theta_m`:
//!
//! ```text
//!   D_sw(X, Y) = (1/M) * sum_m || sort(theta_m^T X) - sort(theta_m^T Y) ||^2
//! ```
//!
//! Note the squared distances are *summed* over the `n` matched points, not
//! averaged; this keeps `D_sw` a lower bound on the squared-Frobenius cost of
//! the best column matching (see [`brute_force_matching`]), which the test
//! suite checks directly.
//!
//! Entropic transport plans are solved in the log domain: with kernel
//! `Phi = exp(-C / beta)` the scaling updates `b <- q ./ (Phi^T a)` and
//! `a <- p ./ (Phi b)` are applied as log-sum-exp operations, so costs far
//! larger than `beta` (e.g. the diagonal shift used to forbid self-coupling)
//! cannot underflow the iteration.

mod plan;
mod projections;
mod sinkhorn;
mod sliced;

pub use plan::{SinkhornScaling, TransportPlan};
pub use projections::{sample_projections, ProjectionSet};
pub use sinkhorn::{pairwise_cost_with_diag_shift, sinkhorn, CostMatrix};
pub use sliced::{brute_force_matching, sliced_wasserstein, wasserstein_1d_sq, SlicedDistance};

use thiserror::Error;

/// Errors from transport computations.
#[derive(Debug, Error)]
pub enum OtError {
    #[error("length mismatch: left has {left} entries, right has {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("shape mismatch: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    ShapeMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("projection dimension {proj} does not match sample dimension {data}")]
    ProjectionDimMismatch { proj: usize, data: usize },

    #[error("projection set needs at least one direction in at least one dimension")]
    EmptyProjectionSet,

    #[error("projection {index} has norm {norm:.17e}, expected 1 within 1e-12")]
    NotUnitNorm { index: usize, norm: f64 },

    #[error("cost entry ({row}, {col}) is not finite")]
    NonFiniteCost { row: usize, col: usize },

    #[error("cost entry ({row}, {col}) is negative: {value:.17e}")]
    NegativeCost { row: usize, col: usize, value: f64 },

    #[error("cost matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },

    #[error("cost matrix is asymmetric at ({row}, {col}): {lower:.17e} vs {upper:.17e}")]
    AsymmetricCost {
        row: usize,
        col: usize,
        lower: f64,
        upper: f64,
    },

    #[error("cost diagonal entry {row} is {value:.17e}, expected zero before shifting")]
    NonZeroDiagonal { row: usize, value: f64 },

    #[error("marginal has {got} entries but the cost axis has {expected}")]
    MarginalLength { got: usize, expected: usize },

    #[error("marginal entry {index} must be finite and nonnegative, got {value:.17e}")]
    InvalidMarginal { index: usize, value: f64 },

    #[error("marginal totals differ beyond 1e-9: {p_total:.17e} vs {q_total:.17e}")]
    MarginalTotalMismatch { p_total: f64, q_total: f64 },

    #[error("entropic temperature must be positive and finite, got {0:.17e}")]
    InvalidBeta(f64),

    #[error("Sinkhorn needs at least one iteration")]
    NoIterations,

    #[error("brute-force matching enumerates at most {max}! permutations, got n = {got}")]
    TooManySamples { max: usize, got: usize },

    #[error("transport plan serialization: {0}")]
    Serialization(String),

    #[error("serialized plan declares {rows}x{cols} but carries {got} weights")]
    CorruptPlan { rows: usize, cols: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, OtError>;

/// Numerically stable `log(sum_i exp(f(i)))` over `i in 0..n`.
///
/// Returns negative infinity for an empty or all-`-inf` sequence, which is
/// exactly what the Sinkhorn updates need for zero-mass marginals.
pub(crate) fn logsumexp_by(n: usize, f: impl Fn(usize) -> f64) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for i in 0..n {
        let v = f(i);
        if v > max {
            max = v;
        }
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut sum = 0.0;
    for i in 0..n {
        sum += (f(i) - max).exp();
    }
    max + sum.ln()
}
