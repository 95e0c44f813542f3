//! Sliced-distance co-regularizers: distribution comparisons that need no
//! sample alignment.

use ndarray::Array2;

use super::ortho::ortho_penalty;
use super::references::ReferenceSet;
use super::{check_latent_shapes, RegError, RegularizerOutput, Result};
use crate::ot::{sliced_wasserstein, ProjectionSet};

/// Average pairwise sliced distance:
/// `(2 / (S(S-1))) * sum_{s<s'} D_sw(Z_s, Z_s') + alpha * ortho(latents)`.
pub fn sw_pairwise_loss(
    latents: &[Array2<f64>],
    proj: &ProjectionSet,
    alpha: f64,
) -> Result<RegularizerOutput> {
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
            let dist = sliced_wasserstein(&latents[i], &latents[j], proj)?;
            loss += coeff * dist.value;
            grads[i] = &grads[i] + &(dist.grad_x * coeff);
            grads[j] = &grads[j] + &(dist.grad_y * coeff);
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

/// Average sliced distance to a single shared reference:
/// `(1/S) * sum_s D_sw(Z_s, G) + alpha * ortho(G)`.
pub fn sw_reference_loss(
    latents: &[Array2<f64>],
    refs: &ReferenceSet,
    proj: &ProjectionSet,
    alpha: f64,
) -> Result<RegularizerOutput> {
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
        let dist = sliced_wasserstein(z, g, proj)?;
        loss += coeff * dist.value;
        latent_grads.push(dist.grad_x * coeff);
        ref_grad = &ref_grad + &(dist.grad_y * coeff);
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::sample_projections;
    use ndarray::array;

    #[test]
    fn two_views_reduce_to_the_plain_sliced_distance() {
        let z1 = array![[0.4, -1.0, 2.0], [0.1, 0.3, -0.2]];
        let z2 = array![[1.0, 0.2, -0.5], [0.7, -0.3, 0.9]];
        let proj = sample_projections(4, 2, 11).unwrap();
        let direct = sliced_wasserstein(&z1, &z2, &proj).unwrap().value;
        let out = sw_pairwise_loss(&[z1, z2], &proj, 0.0).unwrap();
        assert!((out.loss - direct).abs() < 1e-12);
    }

    #[test]
    fn pairwise_loss_is_invariant_to_column_shuffles() {
        let z1 = array![[0.4, -1.0, 2.0], [0.1, 0.3, -0.2]];
        let z2 = array![[1.0, 0.2, -0.5], [0.7, -0.3, 0.9]];
        let z2_shuffled = array![[-0.5, 1.0, 0.2], [0.9, 0.7, -0.3]];
        let proj = sample_projections(4, 2, 11).unwrap();
        let a = sw_pairwise_loss(&[z1.clone(), z2], &proj, 0.01).unwrap().loss;
        let b = sw_pairwise_loss(&[z1, z2_shuffled], &proj, 0.01)
            .unwrap()
            .loss;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn reference_loss_pulls_gradients_into_the_reference() {
        let z1 = array![[0.4, -1.0], [0.1, 0.3]];
        let z2 = array![[1.0, 0.2], [0.7, -0.3]];
        let g = array![[0.0, 0.0], [0.0, 0.0]];
        let refs = ReferenceSet::from_parts(vec![g]).unwrap();
        let proj = sample_projections(6, 2, 3).unwrap();
        let out = sw_reference_loss(&[z1, z2], &refs, &proj, 0.0).unwrap();
        assert!(out.loss > 0.0);
        assert_eq!(out.ref_grads.len(), 1);
        assert!(out.ref_grads[0].iter().any(|&g| g.abs() > 1e-12));
    }

    #[test]
    fn reference_count_must_be_one() {
        let z = array![[0.1, 0.2]];
        let refs = ReferenceSet::from_parts(vec![
            Array2::zeros((1, 2)),
            Array2::zeros((1, 2)),
        ])
        .unwrap();
        let proj = sample_projections(2, 1, 0).unwrap();
        assert!(matches!(
            sw_reference_loss(&[z], &refs, &proj, 0.0),
            Err(RegError::RefCountMismatch {
                expected: 1,
                got: 2
            })
        ));
    }
}
