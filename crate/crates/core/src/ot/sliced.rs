//! Sliced Wasserstein distances with analytic gradients, plus the exact
//! matching oracle the distance lower-bounds.

use itertools::Itertools;
use ndarray::Array2;

use super::{OtError, ProjectionSet, Result};

/// Squared 1-D Wasserstein distance between two equal-length samples:
/// sort both and sum the squared gaps. No averaging over the length — the
/// value grows with the sample count, matching the matrix matching cost.
pub fn wasserstein_1d_sq(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(OtError::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let mut su = u.to_vec();
    let mut sv = v.to_vec();
    su.sort_by(f64::total_cmp);
    sv.sort_by(f64::total_cmp);
    Ok(su
        .iter()
        .zip(&sv)
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Value and gradients of the sliced Wasserstein distance.
#[derive(Debug, Clone)]
pub struct SlicedDistance {
    pub value: f64,
    /// Gradient with respect to the first sample batch (`d x n`).
    pub grad_x: Array2<f64>,
    /// Gradient with respect to the second sample batch (`d x n`).
    pub grad_y: Array2<f64>,
}

/// Stable argsort: indices that put `values` in ascending order, ties kept in
/// original order so gradients are reproducible.
fn argsort(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    idx
}

/// Empirical sliced Wasserstein distance between two `d x n` batches.
///
/// For each direction the projected samples are sorted and matched rank to
/// rank; the value averages the squared matching costs over directions. The
/// gradient holds every per-direction sort permutation fixed — between
/// reorderings the objective is an exact quadratic in the entries, so this is
/// the true gradient almost everywhere.
pub fn sliced_wasserstein(
    x: &Array2<f64>,
    y: &Array2<f64>,
    proj: &ProjectionSet,
) -> Result<SlicedDistance> {
    if x.dim() != y.dim() {
        return Err(OtError::ShapeMismatch {
            left_rows: x.nrows(),
            left_cols: x.ncols(),
            right_rows: y.nrows(),
            right_cols: y.ncols(),
        });
    }
    if proj.dim() != x.nrows() {
        return Err(OtError::ProjectionDimMismatch {
            proj: proj.dim(),
            data: x.nrows(),
        });
    }
    let (d, n) = x.dim();
    let m = proj.len();
    let inv_m = 1.0 / m as f64;

    let mut value = 0.0;
    let mut grad_x = Array2::zeros((d, n));
    let mut grad_y = Array2::zeros((d, n));
    // Per-direction scatter buffers for d(value)/d(projected sample).
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];

    for theta in proj.thetas().rows() {
        let px: Vec<f64> = (0..n).map(|j| theta.dot(&x.column(j))).collect();
        let py: Vec<f64> = (0..n).map(|j| theta.dot(&y.column(j))).collect();
        let ox = argsort(&px);
        let oy = argsort(&py);

        gx.iter_mut().for_each(|g| *g = 0.0);
        gy.iter_mut().for_each(|g| *g = 0.0);
        for rank in 0..n {
            let diff = px[ox[rank]] - py[oy[rank]];
            value += diff * diff;
            gx[ox[rank]] = 2.0 * diff;
            gy[oy[rank]] = -2.0 * diff;
        }
        // Chain rule back through the projection: outer product theta * g.
        for a in 0..d {
            let t = theta[a] * inv_m;
            for j in 0..n {
                grad_x[[a, j]] += t * gx[j];
                grad_y[[a, j]] += t * gy[j];
            }
        }
    }

    Ok(SlicedDistance {
        value: value * inv_m,
        grad_x,
        grad_y,
    })
}

/// Maximum number of columns [`brute_force_matching`] will enumerate.
pub const MATCHING_LIMIT: usize = 8;

/// Exact minimum of `|| X P - Y ||_F^2` over column permutations `P`, found
/// by enumerating all `n!` permutations (`n <= 8`).
///
/// Returns the optimal cost and the matching as `perm[j] =` index of the `X`
/// column paired with column `j` of `Y`. Ties resolve to the lexicographically
/// first permutation. This is the oracle the sliced distance lower-bounds, so
/// tests lean on it heavily.
pub fn brute_force_matching(x: &Array2<f64>, y: &Array2<f64>) -> Result<(f64, Vec<usize>)> {
    if x.dim() != y.dim() {
        return Err(OtError::ShapeMismatch {
            left_rows: x.nrows(),
            left_cols: x.ncols(),
            right_rows: y.nrows(),
            right_cols: y.ncols(),
        });
    }
    let n = x.ncols();
    if n > MATCHING_LIMIT {
        return Err(OtError::TooManySamples {
            max: MATCHING_LIMIT,
            got: n,
        });
    }

    // Pairwise squared distances between columns: cost[i][j] = ||x_i - y_j||^2.
    let mut cost = vec![vec![0.0; n]; n];
    for i in 0..n {
        let xi = x.column(i);
        for j in 0..n {
            let yj = y.column(j);
            let mut acc = 0.0;
            for a in 0..x.nrows() {
                let diff = xi[a] - yj[a];
                acc += diff * diff;
            }
            cost[i][j] = acc;
        }
    }

    let mut best_cost = f64::INFINITY;
    let mut best_perm: Vec<usize> = (0..n).collect();
    for perm in (0..n).permutations(n) {
        let total: f64 = (0..n).map(|j| cost[perm[j]][j]).sum();
        if total < best_cost {
            best_cost = total;
            best_perm = perm;
        }
    }
    Ok((best_cost, best_perm))
}
