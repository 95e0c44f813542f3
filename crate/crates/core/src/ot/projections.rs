//! Random unit directions for sliced distances.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{OtError, Result};

/// A fixed set of `m` unit-norm directions in `R^d`.
///
/// Directions are drawn once (standard normal, then normalized) and then
/// treated as constants: sliced distances and their gradients never
/// differentiate through the directions.
#[derive(Debug, Clone)]
pub struct ProjectionSet {
    /// `m x d`, one unit direction per row.
    thetas: Array2<f64>,
    /// Seed the directions were drawn from (0 for hand-built sets).
    seed: u64,
}

impl ProjectionSet {
    /// Wraps an explicit direction matrix, checking every row for unit norm.
    pub fn from_matrix(thetas: Array2<f64>) -> Result<Self> {
        if thetas.nrows() == 0 || thetas.ncols() == 0 {
            return Err(OtError::EmptyProjectionSet);
        }
        for (index, row) in thetas.rows().into_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > 1e-12 {
                return Err(OtError::NotUnitNorm { index, norm });
            }
        }
        Ok(Self { thetas, seed: 0 })
    }

    /// `m x d` direction matrix, one unit vector per row.
    pub fn thetas(&self) -> &Array2<f64> {
        &self.thetas
    }

    /// Number of directions.
    pub fn len(&self) -> usize {
        self.thetas.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.nrows() == 0
    }

    /// Ambient dimension of the directions.
    pub fn dim(&self) -> usize {
        self.thetas.ncols()
    }

    /// Seed used to draw the directions.
    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Draws `m` independent directions uniformly on the unit sphere in `R^d`.
///
/// Each direction is a normalized standard-normal draw; the (probability
/// zero) event of a zero-norm draw is retried. The stream is a seeded ChaCha
/// generator, so equal `(m, d, seed)` always produce identical directions.
pub fn sample_projections(m: usize, d: usize, seed: u64) -> Result<ProjectionSet> {
    if m == 0 || d == 0 {
        return Err(OtError::EmptyProjectionSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut thetas = Array2::zeros((m, d));
    for mut row in thetas.rows_mut() {
        loop {
            let mut norm_sq = 0.0f64;
            for x in row.iter_mut() {
                *x = StandardNormal.sample(&mut rng);
                norm_sq += *x * *x;
            }
            let norm = norm_sq.sqrt();
            if norm > 1e-12 {
                row.mapv_inplace(|x| x / norm);
                break;
            }
        }
    }
    Ok(ProjectionSet { thetas, seed })
}
