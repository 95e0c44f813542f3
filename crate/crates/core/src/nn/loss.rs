//! Classification and reconstruction losses with analytic gradients.

use ndarray::Array2;

use super::stack::DecoderStack;
use super::{MlpGrads, NnError, Result};

/// Mean cross-entropy of softmax(logits) against integer labels.
///
/// `logits` is `classes x B`; returns the scalar loss and its gradient with
/// respect to the logits, `(softmax - onehot) / B`. Log-sum-exp is computed
/// against the column maximum so large logits cannot overflow.
pub fn softmax_xent(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (classes, batch) = logits.dim();
    if batch == 0 {
        return Err(NnError::EmptyBatch);
    }
    if labels.len() != batch {
        return Err(NnError::LabelCountMismatch {
            logits: batch,
            labels: labels.len(),
        });
    }
    for (index, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(NnError::LabelOutOfRange {
                index,
                label,
                classes,
            });
        }
    }

    let inv_b = 1.0 / batch as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros((classes, batch));
    for (n, &label) in labels.iter().enumerate() {
        let column = logits.column(n);
        let max = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max
            + column
                .iter()
                .map(|&z| (z - max).exp())
                .sum::<f64>()
                .ln();
        loss += lse - column[label];
        for k in 0..classes {
            let softmax = (column[k] - lse).exp();
            grad[[k, n]] = (softmax - if k == label { 1.0 } else { 0.0 }) * inv_b;
        }
    }
    Ok((loss * inv_b, grad))
}

/// Output of [`reconstruction_loss`]: the summed per-view mean-squared
/// errors and the gradients flowing to decoder parameters and latent inputs.
#[derive(Debug)]
pub struct ReconstructionOutput {
    pub loss: f64,
    pub decoder_grads: Vec<MlpGrads>,
    pub latent_grads: Vec<Array2<f64>>,
}

/// Autoencoder reconstruction error: for each view, the decoder maps the
/// latent batch back to input space and the mean squared error over all
/// entries is accumulated; the total is the sum over views.
pub fn reconstruction_loss(
    decoders: &DecoderStack,
    latents: &[Array2<f64>],
    targets: &[&Array2<f64>],
) -> Result<ReconstructionOutput> {
    if latents.len() != decoders.num_views() || targets.len() != decoders.num_views() {
        return Err(NnError::ViewCountMismatch {
            expected: decoders.num_views(),
            got: latents.len().min(targets.len()),
        });
    }
    let mut loss = 0.0;
    let mut decoder_grads = Vec::with_capacity(latents.len());
    let mut latent_grads = Vec::with_capacity(latents.len());
    for ((latent, target), view) in latents.iter().zip(targets).zip(0..) {
        let decoder = decoders.decoder(view);
        let (reconstruction, cache) = decoder.forward(latent)?;
        if reconstruction.dim() != target.dim() {
            return Err(NnError::OutputGradMismatch {
                rows: target.nrows(),
                cols: target.ncols(),
                got_rows: reconstruction.nrows(),
                got_cols: reconstruction.ncols(),
            });
        }
        let diff = &reconstruction - *target;
        let count = (target.nrows() * target.ncols()) as f64;
        loss += diff.iter().map(|d| d * d).sum::<f64>() / count;
        let grad_out = diff.mapv(|d| 2.0 * d / count);
        let (grads, grad_latent) = decoder.backward(&cache, &grad_out)?;
        decoder_grads.push(grads);
        latent_grads.push(grad_latent);
    }
    Ok(ReconstructionOutput {
        loss,
        decoder_grads,
        latent_grads,
    })
}
