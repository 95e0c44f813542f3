//! Trainable reference batches for the reference-coupled losses.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{RegError, Result};

/// `K` trainable reference batches `G_k` (`d x B` each), playing the role of
/// latent "anchor distributions" the views are transported onto.
///
/// References persist across batches and epochs — they are ordinary
/// parameters updated by the optimizer, not resampled per step.
#[derive(Debug, Clone)]
pub struct ReferenceSet {
    refs: Vec<Array2<f64>>,
}

impl ReferenceSet {
    /// Draws `k` references with `N(0, 1) / sqrt(dim)` entries, so each
    /// column starts near unit expected norm.
    pub fn init<R: Rng>(k: usize, dim: usize, width: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (dim as f64).sqrt();
        let refs = (0..k)
            .map(|_| {
                Array2::from_shape_fn((dim, width), |_| {
                    let draw: f64 = StandardNormal.sample(rng);
                    draw * scale
                })
            })
            .collect();
        ReferenceSet { refs }
    }

    /// Wraps explicit reference matrices, which must share one shape.
    pub fn from_parts(refs: Vec<Array2<f64>>) -> Result<Self> {
        if refs.is_empty() {
            return Err(RegError::MissingReferences);
        }
        let shape = refs[0].dim();
        for (index, g) in refs.iter().enumerate() {
            if g.dim() != shape {
                return Err(RegError::RefShapeMismatch {
                    index,
                    rows: shape.0,
                    cols: shape.1,
                    got_rows: g.nrows(),
                    got_cols: g.ncols(),
                });
            }
        }
        Ok(ReferenceSet { refs })
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.refs[0].nrows()
    }

    pub fn width(&self) -> usize {
        self.refs[0].ncols()
    }

    pub fn get(&self, k: usize) -> &Array2<f64> {
        &self.refs[k]
    }

    pub fn get_mut(&mut self, k: usize) -> &mut Array2<f64> {
        &mut self.refs[k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Array2<f64>> {
        self.refs.iter()
    }

    /// Mutable access to every reference, for optimizer parameter maps.
    pub fn refs_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.refs
    }
}
