//! Per-view encoder/decoder stacks and the shared classifier head.

use ndarray::Array2;
use rand::Rng;

use super::mlp::{scaled_uniform, Mlp};
use super::{NnError, Result};

/// One encoder per view (`D_s -> hidden -> out_dim`, leaky-ReLU hidden) plus
/// a linear projection per view (`shared_dim x out_dim`) mapping encoder
/// outputs into the shared comparison space.
///
/// The regularizers compare the *projected* outputs; the classifier consumes
/// the concatenated *unprojected* outputs.
#[derive(Debug, Clone)]
pub struct EncoderStack {
    encoders: Vec<Mlp>,
    projections: Vec<Array2<f64>>,
    view_dims: Vec<usize>,
}

impl EncoderStack {
    /// Builds encoders for the given per-view input widths, one hidden layer
    /// of `hidden_width` units each.
    ///
    /// Initialization is symmetric across views: views with the same input
    /// width start from identical encoder weights (one template per distinct
    /// width, drawn from `rng` in first-appearance order), and every view
    /// starts from the same projection. This preserves similarity between
    /// raw view clouds in latent space at the start of training — with
    /// independent per-view draws, every view is an unrelated random map and
    /// cross-view structure in the data is invisible to the couplings until
    /// long after they have locked in. Per-view parameters diverge as soon
    /// as gradients differ.
    pub fn new<R: Rng>(
        view_dims: &[usize],
        hidden_width: usize,
        out_dim: usize,
        shared_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut templates: Vec<(usize, Mlp)> = Vec::new();
        let mut encoders = Vec::with_capacity(view_dims.len());
        for &d in view_dims {
            let existing = templates.iter().find(|(width, _)| *width == d);
            let encoder = match existing {
                Some((_, template)) => template.clone(),
                None => {
                    let template = Mlp::new(&[d, hidden_width, out_dim], rng)?;
                    templates.push((d, template.clone()));
                    template
                }
            };
            encoders.push(encoder);
        }
        let projection = scaled_uniform(shared_dim, out_dim, rng);
        let projections = vec![projection; view_dims.len()];
        Ok(EncoderStack {
            encoders,
            projections,
            view_dims: view_dims.to_vec(),
        })
    }

    /// Rebuilds a stack from explicit parts (checkpoint loading).
    pub fn from_parts(encoders: Vec<Mlp>, projections: Vec<Array2<f64>>) -> Result<Self> {
        if encoders.len() != projections.len() {
            return Err(NnError::ViewCountMismatch {
                expected: encoders.len(),
                got: projections.len(),
            });
        }
        let view_dims = encoders.iter().map(|e| e.in_dim()).collect();
        Ok(EncoderStack {
            encoders,
            projections,
            view_dims,
        })
    }

    pub fn num_views(&self) -> usize {
        self.encoders.len()
    }

    pub fn view_dims(&self) -> &[usize] {
        &self.view_dims
    }

    /// Width of each encoder output.
    pub fn out_dim(&self) -> usize {
        self.encoders[0].out_dim()
    }

    /// Width of the shared projected space.
    pub fn shared_dim(&self) -> usize {
        self.projections[0].nrows()
    }

    pub fn encoder(&self, view: usize) -> &Mlp {
        &self.encoders[view]
    }

    pub fn encoder_mut(&mut self, view: usize) -> &mut Mlp {
        &mut self.encoders[view]
    }

    pub fn projection(&self, view: usize) -> &Array2<f64> {
        &self.projections[view]
    }

    /// Simultaneous mutable access to all encoders and projections, for
    /// building optimizer parameter maps.
    pub fn parts_mut(&mut self) -> (&mut [Mlp], &mut [Array2<f64>]) {
        (&mut self.encoders, &mut self.projections)
    }

    pub fn projection_mut(&mut self, view: usize) -> &mut Array2<f64> {
        &mut self.projections[view]
    }

    /// Projects an encoder output batch into the shared space.
    pub fn project(&self, view: usize, encoded: &Array2<f64>) -> Result<Array2<f64>> {
        if encoded.nrows() != self.out_dim() {
            return Err(NnError::InputDimMismatch {
                expected: self.out_dim(),
                got: encoded.nrows(),
            });
        }
        Ok(self.projections[view].dot(encoded))
    }
}

/// A decoder per view mirroring the encoders: `out_dim -> hidden -> D_s`.
#[derive(Debug, Clone)]
pub struct DecoderStack {
    decoders: Vec<Mlp>,
}

impl DecoderStack {
    pub fn new<R: Rng>(
        view_dims: &[usize],
        hidden_width: usize,
        in_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let decoders = view_dims
            .iter()
            .map(|&d| Mlp::new(&[in_dim, hidden_width, d], rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(DecoderStack { decoders })
    }

    pub fn from_parts(decoders: Vec<Mlp>) -> Self {
        DecoderStack { decoders }
    }

    pub fn num_views(&self) -> usize {
        self.decoders.len()
    }

    pub fn decoder(&self, view: usize) -> &Mlp {
        &self.decoders[view]
    }

    pub fn decoder_mut(&mut self, view: usize) -> &mut Mlp {
        &mut self.decoders[view]
    }

    /// Mutable access to every decoder, for optimizer parameter maps.
    pub fn decoders_mut(&mut self) -> &mut [Mlp] {
        &mut self.decoders
    }
}

/// Softmax classifier on concatenated encoder outputs:
/// `logits = W^T features + b` with `W: feature_dim x classes`.
#[derive(Debug, Clone)]
pub struct ClassifierHead {
    pub weight: Array2<f64>,
    pub bias: Array2<f64>,
}

impl ClassifierHead {
    pub fn new<R: Rng>(feature_dim: usize, classes: usize, rng: &mut R) -> Self {
        ClassifierHead {
            weight: scaled_uniform(feature_dim, classes, rng),
            bias: Array2::zeros((classes, 1)),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn classes(&self) -> usize {
        self.weight.ncols()
    }

    /// `classes x B` logits for a `feature_dim x B` batch.
    pub fn forward(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        if features.nrows() != self.feature_dim() {
            return Err(NnError::InputDimMismatch {
                expected: self.feature_dim(),
                got: features.nrows(),
            });
        }
        Ok(self.weight.t().dot(features) + &self.bias)
    }

    /// Gradients of the loss with respect to weight, bias, and features,
    /// given `d loss / d logits`.
    pub fn backward(
        &self,
        features: &Array2<f64>,
        grad_logits: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
        if grad_logits.nrows() != self.classes() || grad_logits.ncols() != features.ncols() {
            return Err(NnError::OutputGradMismatch {
                rows: self.classes(),
                cols: features.ncols(),
                got_rows: grad_logits.nrows(),
                got_cols: grad_logits.ncols(),
            });
        }
        let grad_weight = features.dot(&grad_logits.t());
        let grad_bias = grad_logits
            .sum_axis(ndarray::Axis(1))
            .into_shape_with_order((self.classes(), 1))
            .expect("bias gradient reshape");
        let grad_features = self.weight.dot(grad_logits);
        Ok((grad_weight, grad_bias, grad_features))
    }
}
