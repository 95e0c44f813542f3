//! Transport-coupled losses: sliced distances weighted by an entropic
//! transport plan over views.
//!
//! Instead of averaging the pairwise (or view-to-reference) sliced distances
//! uniformly, these losses solve an entropic transport problem whose cost
//! matrix *is* the table of sliced distances, then charge each distance by
//! its coupling weight: `loss = <W, C>`. The plan concentrates weight on the
//! cheapest matches, so views (or references) that already agree are pulled
//! harder while outliers are discounted smoothly.
//!
//! The plan is always **fixed during differentiation**: gradients flow
//! through the cost entries only, never through the Sinkhorn solve. The
//! `*_loss` entry points solve a fresh plan from the current latents and
//! then evaluate under it; the `*_with_plan` variants evaluate under a
//! caller-supplied plan, which is what a descent loop uses between plan
//! refreshes.

use ndarray::{Array1, Array2};

use super::ortho::ortho_penalty;
use super::references::ReferenceSet;
use super::{check_latent_shapes, RegError, RegularizerOutput, Result};
use crate::ot::{
    pairwise_cost_with_diag_shift, sinkhorn, sliced_wasserstein, CostMatrix, ProjectionSet,
    SlicedDistance, TransportPlan,
};

/// Sliced distances between every unordered view pair, stored once per pair.
struct PairwiseDistances {
    /// Entry for each `(i, j)` with `i < j`, in row-major pair order.
    dists: Vec<(usize, usize, SlicedDistance)>,
    /// Symmetric zero-diagonal matrix of the distance values.
    raw_cost: Array2<f64>,
}

fn pairwise_distances(
    latents: &[Array2<f64>],
    proj: &ProjectionSet,
) -> Result<PairwiseDistances> {
    let s = latents.len();
    let mut dists = Vec::with_capacity(s * (s - 1) / 2);
    let mut raw_cost = Array2::zeros((s, s));
    for i in 0..s {
        for j in (i + 1)..s {
            let dist = sliced_wasserstein(&latents[i], &latents[j], proj)?;
            raw_cost[[i, j]] = dist.value;
            raw_cost[[j, i]] = dist.value;
            dists.push((i, j, dist));
        }
    }
    Ok(PairwiseDistances { dists, raw_cost })
}

/// Shared assembly for the pairwise loss once a plan is available. The loss
/// charges the *raw* (unshifted) distances — the diagonal shift exists only
/// to price self-coupling out of the plan, and the shifted diagonal is a
/// constant with respect to the latents anyway.
fn assemble_pairwise(
    pd: &PairwiseDistances,
    weights: &Array2<f64>,
    latents: &[Array2<f64>],
    alpha: f64,
) -> Result<(f64, Vec<Array2<f64>>)> {
    let mut loss = 0.0;
    let mut grads: Vec<Array2<f64>> = latents.iter().map(|z| Array2::zeros(z.dim())).collect();
    for (i, j, dist) in &pd.dists {
        let coeff = weights[[*i, *j]] + weights[[*j, *i]];
        loss += coeff * dist.value;
        grads[*i] = &grads[*i] + &(&dist.grad_x * coeff);
        grads[*j] = &grads[*j] + &(&dist.grad_y * coeff);
    }

    let views: Vec<&Array2<f64>> = latents.iter().collect();
    let (penalty, penalty_grads) = ortho_penalty(&views)?;
    loss += alpha * penalty;
    for (g, pg) in grads.iter_mut().zip(penalty_grads) {
        *g = &*g + &(pg * alpha);
    }
    Ok((loss, grads))
}

/// Solves a fresh plan over the pairwise sliced distances (uniform marginals,
/// diagonal-shifted cost) and evaluates `<W, C> + alpha * ortho(latents)`
/// under it. The solved plan and the shifted cost ride along in the output.
pub fn hot_pairwise_loss(
    latents: &[Array2<f64>],
    proj: &ProjectionSet,
    alpha: f64,
    beta: f64,
    sinkhorn_iters: usize,
) -> Result<RegularizerOutput> {
    let s = latents.len();
    if s < 2 {
        return Err(RegError::TooFewViews { needed: 2, got: s });
    }
    check_latent_shapes(latents)?;

    let pd = pairwise_distances(latents, proj)?;
    let cost = pairwise_cost_with_diag_shift(&pd.raw_cost)?;
    let uniform = Array1::from_elem(s, 1.0 / s as f64);
    let plan = sinkhorn(&cost, &uniform, &uniform, beta, sinkhorn_iters)?;

    let (loss, latent_grads) = assemble_pairwise(&pd, &plan.weights, latents, alpha)?;
    Ok(RegularizerOutput {
        loss,
        latent_grads,
        ref_grads: Vec::new(),
        plan: Some(plan),
        cost: Some(cost),
    })
}

/// Evaluates the pairwise transport loss under a caller-held plan. The plan
/// is treated as a constant; only the distances are differentiated. The
/// output carries the *raw* (zero-diagonal, unshifted) distance matrix so
/// callers can pool estimates across batches before the next plan solve.
pub fn hot_pairwise_with_plan(
    latents: &[Array2<f64>],
    proj: &ProjectionSet,
    plan: &TransportPlan,
    alpha: f64,
) -> Result<RegularizerOutput> {
    let s = latents.len();
    if s < 2 {
        return Err(RegError::TooFewViews { needed: 2, got: s });
    }
    check_latent_shapes(latents)?;
    if plan.rows() != s || plan.cols() != s {
        return Err(RegError::PlanShapeMismatch {
            rows: s,
            cols: s,
            got_rows: plan.rows(),
            got_cols: plan.cols(),
        });
    }

    let pd = pairwise_distances(latents, proj)?;
    let raw = CostMatrix::new(pd.raw_cost.clone())?;
    let (loss, latent_grads) = assemble_pairwise(&pd, &plan.weights, latents, alpha)?;
    Ok(RegularizerOutput {
        loss,
        latent_grads,
        ref_grads: Vec::new(),
        plan: None,
        cost: Some(raw),
    })
}

/// Solves the plan the pairwise loss couples with, over an explicit matrix
/// of raw (zero-diagonal) pairwise distances: uniform marginals, diagonal
/// priced out. Descent loops that pool distance estimates across batches
/// refresh their plan through this.
pub fn solve_pairwise_coupling(
    raw_cost: &Array2<f64>,
    beta: f64,
    sinkhorn_iters: usize,
) -> Result<TransportPlan> {
    let s = raw_cost.nrows();
    let cost = pairwise_cost_with_diag_shift(raw_cost)?;
    let uniform = Array1::from_elem(s, 1.0 / s as f64);
    Ok(sinkhorn(&cost, &uniform, &uniform, beta, sinkhorn_iters)?)
}

/// Sliced distances from every view to every reference.
struct ReferenceDistances {
    /// `dists[s][k]`: distance from view `s` to reference `k`.
    dists: Vec<Vec<SlicedDistance>>,
    raw_cost: Array2<f64>,
}

fn reference_distances(
    latents: &[Array2<f64>],
    refs: &ReferenceSet,
    proj: &ProjectionSet,
) -> Result<ReferenceDistances> {
    let (d, b) = check_latent_shapes(latents)?;
    if refs.dim() != d || refs.width() != b {
        return Err(RegError::RefShapeMismatch {
            index: 0,
            rows: d,
            cols: b,
            got_rows: refs.dim(),
            got_cols: refs.width(),
        });
    }
    let s = latents.len();
    let k = refs.len();
    let mut dists = Vec::with_capacity(s);
    let mut raw_cost = Array2::zeros((s, k));
    for (si, z) in latents.iter().enumerate() {
        let mut row = Vec::with_capacity(k);
        for (ki, g) in refs.iter().enumerate() {
            let dist = sliced_wasserstein(z, g, proj)?;
            raw_cost[[si, ki]] = dist.value;
            row.push(dist);
        }
        dists.push(row);
    }
    Ok(ReferenceDistances { dists, raw_cost })
}

/// Shared assembly for the reference loss: `loss = sum_{s,k} w_sk * d_sk`
/// plus the orthogonality penalty on the references.
fn assemble_reference(
    rd: &ReferenceDistances,
    weights: &Array2<f64>,
    latents: &[Array2<f64>],
    refs: &ReferenceSet,
    alpha: f64,
) -> Result<(f64, Vec<Array2<f64>>, Vec<Array2<f64>>)> {
    let mut loss = 0.0;
    let mut latent_grads: Vec<Array2<f64>> =
        latents.iter().map(|z| Array2::zeros(z.dim())).collect();
    let mut ref_grads: Vec<Array2<f64>> =
        refs.iter().map(|g| Array2::zeros(g.dim())).collect();
    for (si, row) in rd.dists.iter().enumerate() {
        for (ki, dist) in row.iter().enumerate() {
            let w = weights[[si, ki]];
            loss += w * dist.value;
            latent_grads[si] = &latent_grads[si] + &(&dist.grad_x * w);
            ref_grads[ki] = &ref_grads[ki] + &(&dist.grad_y * w);
        }
    }

    let ref_views: Vec<&Array2<f64>> = refs.iter().collect();
    let (penalty, penalty_grads) = ortho_penalty(&ref_views)?;
    loss += alpha * penalty;
    for (g, pg) in ref_grads.iter_mut().zip(penalty_grads) {
        *g = &*g + &(pg * alpha);
    }
    Ok((loss, latent_grads, ref_grads))
}

/// Solves a fresh plan between views (rows, uniform `1/S`) and references
/// (columns, uniform `1/K`) over the view-to-reference sliced distances, then
/// evaluates `<W, C> + alpha * ortho(refs)` under it.
pub fn hot_reference_loss(
    latents: &[Array2<f64>],
    refs: &ReferenceSet,
    proj: &ProjectionSet,
    alpha: f64,
    beta: f64,
    sinkhorn_iters: usize,
) -> Result<RegularizerOutput> {
    let rd = reference_distances(latents, refs, proj)?;
    let cost = CostMatrix::new(rd.raw_cost.clone())?;
    let s = latents.len();
    let k = refs.len();
    let p = Array1::from_elem(s, 1.0 / s as f64);
    let q = Array1::from_elem(k, 1.0 / k as f64);
    let plan = sinkhorn(&cost, &p, &q, beta, sinkhorn_iters)?;

    let (loss, latent_grads, ref_grads) =
        assemble_reference(&rd, &plan.weights, latents, refs, alpha)?;
    Ok(RegularizerOutput {
        loss,
        latent_grads,
        ref_grads,
        plan: Some(plan),
        cost: Some(cost),
    })
}

/// Evaluates the reference transport loss under a caller-held plan. The
/// output carries the view-to-reference distance matrix so callers can pool
/// estimates across batches before the next plan solve.
pub fn hot_reference_with_plan(
    latents: &[Array2<f64>],
    refs: &ReferenceSet,
    proj: &ProjectionSet,
    plan: &TransportPlan,
    alpha: f64,
) -> Result<RegularizerOutput> {
    let s = latents.len();
    let k = refs.len();
    if plan.rows() != s || plan.cols() != k {
        return Err(RegError::PlanShapeMismatch {
            rows: s,
            cols: k,
            got_rows: plan.rows(),
            got_cols: plan.cols(),
        });
    }
    let rd = reference_distances(latents, refs, proj)?;
    let raw = CostMatrix::new(rd.raw_cost.clone())?;
    let (loss, latent_grads, ref_grads) =
        assemble_reference(&rd, &plan.weights, latents, refs, alpha)?;
    Ok(RegularizerOutput {
        loss,
        latent_grads,
        ref_grads,
        plan: None,
        cost: Some(raw),
    })
}

/// Solves the plan the reference loss couples with, over an explicit matrix
/// of view-to-reference distances: rows (views) uniform `1/S`, columns
/// (references) uniform `1/K`.
pub fn solve_reference_coupling(
    raw_cost: &Array2<f64>,
    beta: f64,
    sinkhorn_iters: usize,
) -> Result<TransportPlan> {
    let (s, k) = raw_cost.dim();
    let cost = CostMatrix::new(raw_cost.clone())?;
    let p = Array1::from_elem(s, 1.0 / s as f64);
    let q = Array1::from_elem(k, 1.0 / k as f64);
    Ok(sinkhorn(&cost, &p, &q, beta, sinkhorn_iters)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn line_projection() -> ProjectionSet {
        ProjectionSet::from_matrix(array![[1.0]]).unwrap()
    }

    #[test]
    fn two_view_plan_prices_out_the_diagonal() {
        // 1-D latents: D_sw(z1, z2) = sum of squared sorted gaps = 3 * 25.
        let z1 = array![[0.0, 1.0, 2.0]];
        let z2 = array![[5.0, 6.0, 7.0]];
        let proj = line_projection();
        let out = hot_pairwise_loss(&[z1, z2], &proj, 0.0, 0.1, 200).unwrap();

        let plan = out.plan.as_ref().unwrap();
        // The shifted diagonal costs 150 at temperature 0.1, so self-coupling
        // mass is e^(-1500)-scale: zero in f64.
        assert!(plan.diagonal_mass() < 1e-12);
        assert!(plan.marginal_residual < 1e-9);
        // All mass on the off-diagonal: loss = (0.5 + 0.5) * 75.
        assert!((out.loss - 75.0).abs() < 1e-9);
        // Per-sample gradient 2 * (0 - 5) on view 1, opposite on view 2.
        assert!((out.latent_grads[0][[0, 0]] - (-10.0)).abs() < 1e-9);
        assert!((out.latent_grads[1][[0, 2]] - 10.0).abs() < 1e-9);
        let cost = out.cost.as_ref().unwrap();
        assert!((cost.diag_shift() - 150.0).abs() < 1e-12);
    }

    #[test]
    fn fresh_solve_and_fixed_plan_agree_on_the_same_latents() {
        let z1 = array![[0.3, -1.2, 0.8], [0.5, 0.0, -0.4]];
        let z2 = array![[1.1, 0.2, -0.7], [0.9, -0.3, 0.6]];
        let z3 = array![[-0.2, 0.4, 1.5], [0.1, -0.8, 0.3]];
        let latents = vec![z1, z2, z3];
        let proj = crate::ot::sample_projections(5, 2, 42).unwrap();

        let solved = hot_pairwise_loss(&latents, &proj, 0.01, 0.1, 200).unwrap();
        let fixed = hot_pairwise_with_plan(
            &latents,
            &proj,
            solved.plan.as_ref().unwrap(),
            0.01,
        )
        .unwrap();
        assert!((solved.loss - fixed.loss).abs() < 1e-15);
        for (a, b) in solved.latent_grads.iter().zip(&fixed.latent_grads) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn pairwise_loss_is_invariant_to_column_shuffles() {
        let z1 = array![[0.3, -1.2, 0.8], [0.5, 0.0, -0.4]];
        let z2 = array![[1.1, 0.2, -0.7], [0.9, -0.3, 0.6]];
        let cols = [2usize, 0, 1].map(|j| z2.column(j).to_owned());
        let z2_shuffled = ndarray::stack(
            ndarray::Axis(1),
            &cols.iter().map(|c| c.view()).collect::<Vec<_>>(),
        )
        .unwrap();
        let proj = crate::ot::sample_projections(4, 2, 7).unwrap();

        let a = hot_pairwise_loss(&[z1.clone(), z2], &proj, 0.01, 0.1, 100).unwrap();
        let b = hot_pairwise_loss(&[z1, z2_shuffled], &proj, 0.01, 0.1, 100).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-12);
    }

    #[test]
    fn reference_plan_has_the_requested_marginals() {
        let z1 = array![[0.2, 1.0]];
        let z2 = array![[-0.5, 0.3]];
        let z3 = array![[2.0, -1.0]];
        let refs = ReferenceSet::from_parts(vec![
            array![[0.0, 0.5]],
            array![[1.0, -0.2]],
        ])
        .unwrap();
        let proj = line_projection();
        let out = hot_reference_loss(&[z1, z2, z3], &refs, &proj, 0.0, 0.1, 200).unwrap();

        let plan = out.plan.as_ref().unwrap();
        assert_eq!((plan.rows(), plan.cols()), (3, 2));
        for r in plan.row_marginals() {
            assert!((r - 1.0 / 3.0).abs() < 1e-12);
        }
        for c in plan.col_marginals() {
            assert!((c - 0.5).abs() < 1e-6);
        }
        assert_eq!(out.latent_grads.len(), 3);
        assert_eq!(out.ref_grads.len(), 2);
        assert!(out.loss >= 0.0);
    }

    #[test]
    fn single_view_single_reference_reduces_to_the_plain_distance() {
        // With a 1x1 plan the marginal constraints force w = 1, so the loss
        // is exactly the sliced distance and gradients pass through intact.
        let z = array![[0.0, 1.0]];
        let g = array![[3.0, 4.0]];
        let refs = ReferenceSet::from_parts(vec![g]).unwrap();
        let proj = line_projection();
        let out = hot_reference_loss(&[z], &refs, &proj, 0.0, 0.1, 50).unwrap();
        assert!((out.loss - 18.0).abs() < 1e-12);
        assert!((out.latent_grads[0][[0, 0]] - (-6.0)).abs() < 1e-12);
        assert!((out.latent_grads[0][[0, 1]] - (-6.0)).abs() < 1e-12);
        assert!((out.ref_grads[0][[0, 0]] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_plan_variants_reject_mismatched_shapes() {
        let z1 = array![[0.0, 1.0]];
        let z2 = array![[2.0, 3.0]];
        let proj = line_projection();
        let solved = hot_pairwise_loss(&[z1.clone(), z2.clone()], &proj, 0.0, 0.1, 50).unwrap();
        let plan = solved.plan.unwrap();

        let three = vec![z1.clone(), z2.clone(), array![[4.0, 5.0]]];
        assert!(matches!(
            hot_pairwise_with_plan(&three, &proj, &plan, 0.0),
            Err(RegError::PlanShapeMismatch { .. })
        ));

        let refs = ReferenceSet::from_parts(vec![array![[0.0, 0.5]]]).unwrap();
        assert!(matches!(
            hot_reference_with_plan(&[z1, z2], &refs, &proj, &plan, 0.0),
            Err(RegError::PlanShapeMismatch { .. })
        ));
    }
}
