//! Distance-based co-regularization baselines. Both compare samples
//! positionally (column `n` of one batch against column `n` of another), so
//! they are only meaningful on aligned batches and refuse anything else.

use ndarray::Array2;

use super::ortho::ortho_penalty;
use super::references::ReferenceSet;
use super::{check_latent_shapes, RegError, RegularizerOutput, Result};

/// Pairwise least-squares alignment:
/// `(2 / (S(S-1))) * sum_{s<s'} ||Z_s - Z_s'||_F^2 + alpha * ortho(latents)`.
pub fn lscca_loss(
    latents: &[Array2<f64>],
    alpha: f64,
    aligned: bool,
) -> Result<RegularizerOutput> {
    if !aligned {
        return Err(RegError::UnalignedBatch);
    }
    let s = latents.len();
    if s < 2 {
        return Err(RegError::TooFewViews { needed: 2, got: s });
    }
    check_latent_shapes(latents)?;

    let coeff = 2.0 / (s as f64 * (s as f64 - 1.0));
    let mut loss = 0.0;
    let mut grads: Vec<Array2<f64>> = latents.iter().map(|z| Array2::zeros(z.dim())).collect();
    for i in 0..s {
        for j in (i + 1)..s {
            let diff = &latents[i] - &latents[j];
            loss += coeff * diff.iter().map(|d| d * d).sum::<f64>();
            let g = diff.mapv(|d| 2.0 * coeff * d);
            grads[i] = &grads[i] + &g;
            grads[j] = &grads[j] - &g;
        }
    }

    let views: Vec<&Array2<f64>> = latents.iter().collect();
    let (penalty, penalty_grads) = ortho_penalty(&views)?;
    loss += alpha * penalty;
    for (g, pg) in grads.iter_mut().zip(penalty_grads) {
        *g = &*g + &(pg * alpha);
    }

    Ok(RegularizerOutput {
        loss,
        latent_grads: grads,
        ref_grads: Vec::new(),
        plan: None,
        cost: None,
    })
}

/// Alignment to a single shared reference:
/// `(1/S) * sum_s ||Z_s - G||_F^2 + alpha * ortho(G)`.
///
/// The orthogonality penalty binds the reference, mirroring the hard
/// constraint the relaxation replaces; gradients flow to both the latents
/// and `G`.
pub fn gdcca_loss(
    latents: &[Array2<f64>],
    refs: &ReferenceSet,
    alpha: f64,
    aligned: bool,
) -> Result<RegularizerOutput> {
    if !aligned {
        return Err(RegError::UnalignedBatch);
    }
    if refs.len() != 1 {
        return Err(RegError::RefCountMismatch {
            expected: 1,
            got: refs.len(),
        });
    }
    let (d, b) = check_latent_shapes(latents)?;
    let g = refs.get(0);
    if g.dim() != (d, b) {
        return Err(RegError::RefShapeMismatch {
            index: 0,
            rows: d,
            cols: b,
            got_rows: g.nrows(),
            got_cols: g.ncols(),
        });
    }

    let s = latents.len();
    let coeff = 1.0 / s as f64;
    let mut loss = 0.0;
    let mut latent_grads = Vec::with_capacity(s);
    let mut ref_grad = Array2::zeros((d, b));
    for z in latents {
        let diff = z - g;
        loss += coeff * diff.iter().map(|v| v * v).sum::<f64>();
        latent_grads.push(diff.mapv(|v| 2.0 * coeff * v));
        ref_grad = &ref_grad - &diff.mapv(|v| 2.0 * coeff * v);
    }

    let (penalty, penalty_grads) = ortho_penalty(&[g])?;
    loss += alpha * penalty;
    ref_grad = &ref_grad + &(penalty_grads.into_iter().next().unwrap() * alpha);

    Ok(RegularizerOutput {
        loss,
        latent_grads,
        ref_grads: vec![ref_grad],
        plan: None,
        cost: None,
    })
}
