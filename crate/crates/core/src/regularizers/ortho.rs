//! Soft orthogonality penalty on summed batch Gram matrices.

use ndarray::Array2;

use super::{check_latent_shapes_loose, Result};

/// Penalty `|| sum_s (1/B_s) M_s M_s^T - I ||_F^2` with gradients
/// `(4/B_s) A M_s` where `A` is the (symmetric) deviation matrix.
///
/// Each matrix is normalized by its own column count, so the penalty is
/// invariant to batch size; the same operation serves both latent batches
/// and reference batches. Inputs must share the row dimension `d` but may
/// have different widths.
pub fn ortho_penalty(mats: &[&Array2<f64>]) -> Result<(f64, Vec<Array2<f64>>)> {
    let d = check_latent_shapes_loose(mats)?;

    let mut deviation = Array2::zeros((d, d));
    for m in mats {
        let inv_b = 1.0 / m.ncols() as f64;
        deviation = deviation + inv_b * m.dot(&m.t());
    }
    for i in 0..d {
        deviation[[i, i]] -= 1.0;
    }

    let loss = deviation.iter().map(|a| a * a).sum();
    let grads = mats
        .iter()
        .map(|m| {
            let scale = 4.0 / m.ncols() as f64;
            deviation.dot(*m) * scale
        })
        .collect();
    Ok((loss, grads))
}
