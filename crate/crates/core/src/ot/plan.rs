//! Transport-plan container and its on-disk forms.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{OtError, Result};

/// The Sinkhorn scaling vectors `a`, `b` for the factorization
/// `w_ij = a_i * exp(-c_ij / beta) * b_j`.
///
/// The solver works in the log domain; these are the exponentiated values,
/// which stay finite for moderate cost scales but can overflow for extreme
/// shifted costs even though the plan weights themselves remain exact.
#[derive(Debug, Clone)]
pub struct SinkhornScaling {
    pub left: Array1<f64>,
    pub right: Array1<f64>,
}

/// An entropic transport plan between a row distribution `p` and a column
/// distribution `q`.
///
/// Plans produced by [`super::sinkhorn`] carry their scaling vectors and the
/// achieved marginal residual (the worst absolute row/column marginal error);
/// the solver records the residual rather than asserting convergence, so
/// callers can decide what is acceptable. Deserialized plans have no scaling
/// vectors.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    /// `rows x cols` nonnegative coupling weights.
    pub weights: Array2<f64>,
    /// Target row marginal.
    pub p: Array1<f64>,
    /// Target column marginal.
    pub q: Array1<f64>,
    /// Scaling vectors from the solver, if this plan came from one.
    pub scaling: Option<SinkhornScaling>,
    /// Entropic temperature the plan was solved at.
    pub beta: f64,
    /// Number of Sinkhorn rounds performed.
    pub iterations: usize,
    /// Achieved `max(|W 1 - p|_inf, |W^T 1 - q|_inf)`.
    pub marginal_residual: f64,
}

/// Serialized form: weights flattened row-major.
#[derive(Serialize, Deserialize)]
struct PlanFile {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
    beta: f64,
    iterations: usize,
    marginal_residual: f64,
}

impl TransportPlan {
    pub fn rows(&self) -> usize {
        self.weights.nrows()
    }

    pub fn cols(&self) -> usize {
        self.weights.ncols()
    }

    /// Achieved row marginals `W 1`.
    pub fn row_marginals(&self) -> Array1<f64> {
        self.weights.sum_axis(Axis(1))
    }

    /// Achieved column marginals `W^T 1`.
    pub fn col_marginals(&self) -> Array1<f64> {
        self.weights.sum_axis(Axis(0))
    }

    /// Total weight on the main diagonal (up to the shorter axis). For
    /// self-coupling-suppressed pairwise plans this should be tiny.
    pub fn diagonal_mass(&self) -> f64 {
        (0..self.rows().min(self.cols()))
            .map(|i| self.weights[[i, i]])
            .sum()
    }

    /// Largest absolute asymmetry `|w_ij - w_ji|`; zero for non-square plans
    /// is not meaningful and an error is returned instead.
    pub fn max_asymmetry(&self) -> Result<f64> {
        if self.rows() != self.cols() {
            return Err(OtError::NotSquare {
                rows: self.rows(),
                cols: self.cols(),
            });
        }
        let n = self.rows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.weights[[i, j]] - self.weights[[j, i]]).abs());
            }
        }
        Ok(worst)
    }

    /// Hard assignment: for each row, the column receiving the most mass.
    /// Ties resolve to the lowest column index.
    pub fn row_argmax(&self) -> Vec<usize> {
        self.weights
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = 0;
                for (j, &w) in row.iter().enumerate() {
                    if w > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    /// JSON form with row-major weights.
    pub fn to_json_string(&self) -> Result<String> {
        let file = PlanFile {
            rows: self.rows(),
            cols: self.cols(),
            weights: self.weights.iter().copied().collect(),
            p: self.p.to_vec(),
            q: self.q.to_vec(),
            beta: self.beta,
            iterations: self.iterations,
            marginal_residual: self.marginal_residual,
        };
        serde_json::to_string_pretty(&file).map_err(|e| OtError::Serialization(e.to_string()))
    }

    /// Parses the JSON form. The scaling vectors are not serialized, so the
    /// result carries `scaling: None`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: PlanFile =
            serde_json::from_str(text).map_err(|e| OtError::Serialization(e.to_string()))?;
        if file.weights.len() != file.rows * file.cols
            || file.p.len() != file.rows
            || file.q.len() != file.cols
        {
            return Err(OtError::CorruptPlan {
                rows: file.rows,
                cols: file.cols,
                got: file.weights.len(),
            });
        }
        let weights = Array2::from_shape_vec((file.rows, file.cols), file.weights)
            .map_err(|e| OtError::Serialization(e.to_string()))?;
        Ok(TransportPlan {
            weights,
            p: Array1::from_vec(file.p),
            q: Array1::from_vec(file.q),
            scaling: None,
            beta: file.beta,
            iterations: file.iterations,
            marginal_residual: file.marginal_residual,
        })
    }

    /// Plain CSV of the weights, one matrix row per line, 17 significant
    /// digits so the values round-trip exactly.
    pub fn weights_csv(&self) -> String {
        let mut out = String::new();
        for row in self.weights.rows() {
            let cells: Vec<String> = row.iter().map(|w| format!("{w:.16e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}
