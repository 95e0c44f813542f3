//! Multilayer perceptrons: linear layers with leaky-ReLU hidden activations
//! and a linear output layer.

use ndarray::Array2;
use rand::Rng;

use super::{NnError, Result};

/// Negative-side slope of the leaky-ReLU hidden activation.
pub const LEAKY_SLOPE: f64 = 0.01;

/// A dense layer `y = W x + b` with `W: out x in` and `b: out x 1`
/// (broadcast across batch columns).
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array2<f64>,
}

/// Gradients for one [`Linear`] layer, same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub weight: Array2<f64>,
    pub bias: Array2<f64>,
}

/// Draws a `rows x cols` matrix uniformly from the scaled interval
/// `+-sqrt(6 / (fan_in + fan_out))`, entries in row-major order so the
/// consumed stream is reproducible.
pub(crate) fn scaled_uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

impl Linear {
    /// Scaled-uniform weight, zero bias.
    pub fn new<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Linear {
            weight: scaled_uniform(out_dim, in_dim, rng),
            bias: Array2::zeros((out_dim, 1)),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// A feed-forward network: every layer but the last applies a leaky ReLU
/// (slope [`LEAKY_SLOPE`]); the last layer is linear.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Per-layer inputs and pre-activations recorded by [`Mlp::forward`],
/// consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each layer (so `inputs[0]` is the network input).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation output of each layer.
    preacts: Vec<Array2<f64>>,
}

/// Gradients for every layer of an [`Mlp`].
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<LinearGrads>,
}

impl Mlp {
    /// Builds a network with the given layer widths, e.g. `[64, 32, 10]`
    /// produces one hidden layer (64 -> 32, leaky ReLU) and a linear output
    /// (32 -> 10). Needs at least an input and an output width.
    pub fn new<R: Rng>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(NnError::TooFewDims(dims.len()));
        }
        let layers = dims
            .windows(2)
            .map(|w| Linear::new(w[0], w[1], rng))
            .collect();
        Ok(Mlp { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Forward pass on a `in_dim x B` batch; returns the `out_dim x B`
    /// output and the cache needed for [`Mlp::backward`].
    pub fn forward(&self, x: &Array2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        if x.nrows() != self.in_dim() {
            return Err(NnError::InputDimMismatch {
                expected: self.in_dim(),
                got: x.nrows(),
            });
        }
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            preacts: Vec::with_capacity(self.layers.len()),
        };
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.weight.dot(&h) + &layer.bias;
            cache.inputs.push(h);
            cache.preacts.push(z.clone());
            h = if i < last {
                z.mapv(|v| if v >= 0.0 { v } else { LEAKY_SLOPE * v })
            } else {
                z
            };
        }
        Ok((h, cache))
    }

    /// Backward pass: given `d loss / d output`, returns parameter gradients
    /// and `d loss / d input`. The cache must come from a forward pass of
    /// this same network on the same batch.
    pub fn backward(
        &self,
        cache: &MlpCache,
        grad_out: &Array2<f64>,
    ) -> Result<(MlpGrads, Array2<f64>)> {
        if cache.preacts.len() != self.layers.len() || cache.inputs.len() != self.layers.len() {
            return Err(NnError::StaleCache {
                expected: self.layers.len(),
                got: cache.preacts.len(),
            });
        }
        let last = self.layers.len() - 1;
        let out_shape = cache.preacts[last].dim();
        if grad_out.dim() != out_shape {
            return Err(NnError::OutputGradMismatch {
                rows: out_shape.0,
                cols: out_shape.1,
                got_rows: grad_out.nrows(),
                got_cols: grad_out.ncols(),
            });
        }
        for (layer, input) in self.layers.iter().zip(&cache.inputs) {
            if input.nrows() != layer.in_dim() {
                return Err(NnError::InputDimMismatch {
                    expected: layer.in_dim(),
                    got: input.nrows(),
                });
            }
        }

        let mut grads = vec![
            LinearGrads {
                weight: Array2::zeros((0, 0)),
                bias: Array2::zeros((0, 0)),
            };
            self.layers.len()
        ];
        let mut grad_h = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            // Hidden layers: push the gradient through the leaky ReLU first.
            let grad_z = if i < last {
                let mut g = grad_h.clone();
                g.zip_mut_with(&cache.preacts[i], |gv, &z| {
                    if z < 0.0 {
                        *gv *= LEAKY_SLOPE;
                    }
                });
                g
            } else {
                grad_h
            };
            let input = &cache.inputs[i];
            let grad_w = grad_z.dot(&input.t());
            let grad_b = grad_z
                .sum_axis(ndarray::Axis(1))
                .into_shape_with_order((self.layers[i].out_dim(), 1))
                .expect("bias gradient reshape");
            grad_h = self.layers[i].weight.t().dot(&grad_z);
            grads[i] = LinearGrads {
                weight: grad_w,
                bias: grad_b,
            };
        }
        Ok((MlpGrads { layers: grads }, grad_h))
    }
}
