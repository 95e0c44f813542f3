//! Entropic optimal transport via log-domain Sinkhorn iterations.

use ndarray::{Array1, Array2};

use super::plan::{SinkhornScaling, TransportPlan};
use super::{logsumexp_by, OtError, Result};

/// A validated transport cost matrix (finite, nonnegative entries), plus the
/// diagonal shift that was applied, if any.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    costs: Array2<f64>,
    diag_shift: f64,
}

impl CostMatrix {
    /// Wraps a raw cost matrix, rejecting non-finite or negative entries.
    pub fn new(costs: Array2<f64>) -> Result<Self> {
        validate_entries(&costs)?;
        Ok(Self {
            costs,
            diag_shift: 0.0,
        })
    }

    pub fn costs(&self) -> &Array2<f64> {
        &self.costs
    }

    /// The constant added to the diagonal (0 when no shift was applied).
    pub fn diag_shift(&self) -> f64 {
        self.diag_shift
    }

    pub fn nrows(&self) -> usize {
        self.costs.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.costs.ncols()
    }
}

fn validate_entries(costs: &Array2<f64>) -> Result<()> {
    for ((row, col), &value) in costs.indexed_iter() {
        if !value.is_finite() {
            return Err(OtError::NonFiniteCost { row, col });
        }
        if value < 0.0 {
            return Err(OtError::NegativeCost { row, col, value });
        }
    }
    Ok(())
}

/// Turns a symmetric pairwise distance matrix with zero diagonal into a
/// self-coupling-suppressed transport cost by adding `c = sum of all entries`
/// to the diagonal.
///
/// Any feasible plan pays `c * (diagonal mass)`, while the total off-diagonal
/// cost of *any* plan is at most `c`; the shift therefore prices the diagonal
/// out of the optimum, and with a small entropic temperature the solved plan
/// puts only vanishing mass there.
pub fn pairwise_cost_with_diag_shift(raw: &Array2<f64>) -> Result<CostMatrix> {
    if raw.nrows() != raw.ncols() {
        return Err(OtError::NotSquare {
            rows: raw.nrows(),
            cols: raw.ncols(),
        });
    }
    validate_entries(raw)?;
    let n = raw.nrows();
    for i in 0..n {
        if raw[[i, i]].abs() > 1e-8 {
            return Err(OtError::NonZeroDiagonal {
                row: i,
                value: raw[[i, i]],
            });
        }
        for j in (i + 1)..n {
            if (raw[[i, j]] - raw[[j, i]]).abs() > 1e-8 {
                return Err(OtError::AsymmetricCost {
                    row: i,
                    col: j,
                    lower: raw[[j, i]],
                    upper: raw[[i, j]],
                });
            }
        }
    }
    let shift: f64 = raw.sum();
    let mut costs = raw.clone();
    for i in 0..n {
        costs[[i, i]] += shift;
    }
    Ok(CostMatrix {
        costs,
        diag_shift: shift,
    })
}

/// Solves the entropic transport problem `min <W, C> + beta * H(W)` subject
/// to `W 1 = p`, `W^T 1 = q` with `iterations` rounds of alternating scaling.
///
/// Each round updates `b <- q ./ (Phi^T a)` then `a <- p ./ (Phi b)` where
/// `Phi = exp(-C / beta)`, entirely in the log domain, so arbitrarily large
/// cost/temperature ratios cannot underflow. Because every round ends on the
/// `a` update, the returned row marginals match `p` to machine precision; the
/// column residual is whatever the iteration achieved and is recorded on the
/// plan rather than asserted.
///
/// Zero-mass marginal entries are honored exactly: the corresponding plan row
/// or column is identically zero.
pub fn sinkhorn(
    cost: &CostMatrix,
    p: &Array1<f64>,
    q: &Array1<f64>,
    beta: f64,
    iterations: usize,
) -> Result<TransportPlan> {
    let (rows, cols) = (cost.nrows(), cost.ncols());
    if p.len() != rows {
        return Err(OtError::MarginalLength {
            got: p.len(),
            expected: rows,
        });
    }
    if q.len() != cols {
        return Err(OtError::MarginalLength {
            got: q.len(),
            expected: cols,
        });
    }
    for (index, &value) in p.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(OtError::InvalidMarginal { index, value });
        }
    }
    for (index, &value) in q.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(OtError::InvalidMarginal { index, value });
        }
    }
    let p_total: f64 = p.sum();
    let q_total: f64 = q.sum();
    if (p_total - q_total).abs() > 1e-9 {
        return Err(OtError::MarginalTotalMismatch { p_total, q_total });
    }
    if !beta.is_finite() || beta <= 0.0 {
        return Err(OtError::InvalidBeta(beta));
    }
    if iterations == 0 {
        return Err(OtError::NoIterations);
    }

    // Log-domain kernel and scalings. ln(0) = -inf encodes zero-mass entries.
    let log_kernel = cost.costs().mapv(|c| -c / beta);
    let log_p = p.mapv(f64::ln);
    let log_q = q.mapv(f64::ln);
    let mut log_a = log_p.clone();
    let mut log_b = Array1::from_elem(cols, f64::NEG_INFINITY);

    for _ in 0..iterations {
        for j in 0..cols {
            log_b[j] = if log_q[j] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                log_q[j] - logsumexp_by(rows, |i| log_kernel[[i, j]] + log_a[i])
            };
        }
        for i in 0..rows {
            log_a[i] = if log_p[i] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                log_p[i] - logsumexp_by(cols, |j| log_kernel[[i, j]] + log_b[j])
            };
        }
    }

    let mut weights = Array2::zeros((rows, cols));
    for i in 0..rows {
        for j in 0..cols {
            weights[[i, j]] = (log_a[i] + log_kernel[[i, j]] + log_b[j]).exp();
        }
    }

    let mut residual = 0.0f64;
    for i in 0..rows {
        residual = residual.max((weights.row(i).sum() - p[i]).abs());
    }
    for j in 0..cols {
        residual = residual.max((weights.column(j).sum() - q[j]).abs());
    }

    Ok(TransportPlan {
        weights,
        p: p.clone(),
        q: q.clone(),
        scaling: Some(SinkhornScaling {
            left: log_a.mapv(f64::exp),
            right: log_b.mapv(f64::exp),
        }),
        beta,
        iterations,
        marginal_residual: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn uniform(n: usize) -> Array1<f64> {
        Array1::from_elem(n, 1.0 / n as f64)
    }

    #[test]
    fn constant_cost_yields_the_product_coupling() {
        let cost = CostMatrix::new(Array2::from_elem((3, 3), 0.7)).unwrap();
        let plan = sinkhorn(&cost, &uniform(3), &uniform(3), 0.5, 50).unwrap();
        for &w in plan.weights.iter() {
            assert!((w - 1.0 / 9.0).abs() < 1e-12);
        }
        assert!(plan.marginal_residual < 1e-12);
    }

    #[test]
    fn two_by_two_plan_matches_the_analytic_fixed_point() {
        // For C = [[0,1],[1,0]], uniform marginals, beta = 0.1 the symmetric
        // fixed point is a^2 * [[1, e^-10], [e^-10, 1]] with row sums 1/2,
        // so a^2 = 0.5 / (1 + e^-10).
        let cost = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let plan = sinkhorn(&cost, &uniform(2), &uniform(2), 0.1, 200).unwrap();
        let e = (-10.0f64).exp();
        let scale = 0.5 / (1.0 + e);
        let expected = [[scale, scale * e], [scale * e, scale]];
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (plan.weights[[i, j]] - expected[i][j]).abs() < 1e-10,
                    "weight ({i},{j}) = {}, expected {}",
                    plan.weights[[i, j]],
                    expected[i][j]
                );
            }
        }
        // Off-diagonal mass is about 2.27e-5.
        assert!((plan.weights[[0, 1]] - 2.2699e-5).abs() < 1e-8);
    }

    #[test]
    fn zero_mass_row_gets_a_zero_plan_row() {
        let cost = CostMatrix::new(array![[0.2, 0.4], [0.3, 0.1]]).unwrap();
        let p = array![1.0, 0.0];
        let q = array![0.5, 0.5];
        let plan = sinkhorn(&cost, &p, &q, 0.5, 100).unwrap();
        assert_eq!(plan.weights[[1, 0]], 0.0);
        assert_eq!(plan.weights[[1, 1]], 0.0);
        assert!((plan.weights.row(0).sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_cost_and_marginals_give_a_symmetric_plan() {
        let raw = array![
            [0.0, 0.9, 0.2, 0.5],
            [0.9, 0.0, 0.7, 0.3],
            [0.2, 0.7, 0.0, 0.8],
            [0.5, 0.3, 0.8, 0.0]
        ];
        let cost = pairwise_cost_with_diag_shift(&raw).unwrap();
        // The diagonal shift makes this a slow instance (cost range ~70x the
        // temperature), so give the iteration room to actually converge; the
        // fixed point itself is symmetric.
        let plan = sinkhorn(&cost, &uniform(4), &uniform(4), 0.1, 4000).unwrap();
        assert!(plan.marginal_residual < 1e-12);
        assert!(plan.max_asymmetry().unwrap() < 1e-8);
        assert!(plan.diagonal_mass() < 1e-4);
    }

    #[test]
    fn diag_shift_adds_the_total_mass_to_the_diagonal() {
        let raw = array![[0.0, 2.0], [2.0, 0.0]];
        let cost = pairwise_cost_with_diag_shift(&raw).unwrap();
        assert_eq!(cost.diag_shift(), 4.0);
        assert_eq!(cost.costs()[[0, 0]], 4.0);
        assert_eq!(cost.costs()[[1, 1]], 4.0);
        assert_eq!(cost.costs()[[0, 1]], 2.0);
    }

    #[test]
    fn diag_shift_rejects_asymmetric_or_marked_diagonal_input() {
        let asymmetric = array![[0.0, 1.0], [2.0, 0.0]];
        assert!(matches!(
            pairwise_cost_with_diag_shift(&asymmetric),
            Err(OtError::AsymmetricCost { .. })
        ));
        let dirty_diag = array![[0.5, 1.0], [1.0, 0.0]];
        assert!(matches!(
            pairwise_cost_with_diag_shift(&dirty_diag),
            Err(OtError::NonZeroDiagonal { .. })
        ));
    }

    #[test]
    fn mismatched_marginal_totals_are_rejected() {
        let cost = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let p = array![0.6, 0.6];
        let q = array![0.5, 0.5];
        assert!(matches!(
            sinkhorn(&cost, &p, &q, 0.1, 10),
            Err(OtError::MarginalTotalMismatch { .. })
        ));
    }

    #[test]
    fn non_finite_costs_are_rejected_at_construction() {
        let bad = array![[0.0, f64::NAN], [1.0, 0.0]];
        assert!(matches!(
            CostMatrix::new(bad),
            Err(OtError::NonFiniteCost { row: 0, col: 1 })
        ));
        let negative = array![[0.0, -1.0], [1.0, 0.0]];
        assert!(matches!(
            CostMatrix::new(negative),
            Err(OtError::NegativeCost { .. })
        ));
    }

    #[test]
    fn scaling_vectors_factor_the_plan() {
        let cost = CostMatrix::new(array![[0.3, 0.9], [0.2, 0.6]]).unwrap();
        let plan = sinkhorn(&cost, &uniform(2), &uniform(2), 0.7, 60).unwrap();
        let scaling = plan.scaling.as_ref().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let reconstructed =
                    scaling.left[i] * (-cost.costs()[[i, j]] / 0.7).exp() * scaling.right[j];
                let rel = (plan.weights[[i, j]] - reconstructed).abs()
                    / plan.weights[[i, j]].max(1e-300);
                assert!(rel < 1e-12, "factorization off by {rel}");
            }
        }
    }
}
