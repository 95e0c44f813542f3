//! Classification accuracy and view-cluster recovery scoring.

use crate::ot::TransportPlan;

use super::{EvalError, Result};

/// Fraction of positions where prediction equals truth.
pub fn accuracy(preds: &[usize], truth: &[usize]) -> Result<f64> {
    if preds.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            truth: truth.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let matches = preds.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(matches as f64 / preds.len() as f64)
}

/// Scores how well a transport plan recovers a planted view partition:
/// each view (row) is assigned to its argmax column (ties to the lowest
/// index) and the resulting partition is compared to the planted one by
/// adjusted Rand index.
pub fn cluster_recovery(plan: &TransportPlan, planted: &[usize]) -> Result<f64> {
    if plan.rows() != planted.len() {
        return Err(EvalError::PlanRowMismatch {
            rows: plan.rows(),
            planted: planted.len(),
        });
    }
    if planted.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(adjusted_rand_index(&plan.row_argmax(), planted))
}

/// Adjusted Rand index between two partitions given as per-item group ids,
/// by the contingency-table formula:
///
/// `(Σ_ij C(n_ij,2) − E) / (½[Σ_i C(a_i,2) + Σ_j C(b_j,2)] − E)` with
/// `E = Σ_i C(a_i,2) · Σ_j C(b_j,2) / C(n,2)`.
///
/// Invariant to relabeling either partition. When both partitions are
/// trivial in the same way (the denominator vanishes: both all-singletons or
/// both a single group) they agree perfectly and the score is 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "partitions must cover the same items");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }

    fn choose2(count: usize) -> f64 {
        let c = count as f64;
        c * (c - 1.0) / 2.0
    }
    fn group_sizes(ids: &[usize]) -> Vec<usize> {
        let mut sizes = vec![0usize; ids.iter().max().map_or(0, |m| m + 1)];
        for &g in ids {
            sizes[g] += 1;
        }
        sizes
    }

    let a_sizes = group_sizes(a);
    let b_sizes = group_sizes(b);
    let mut joint = vec![vec![0usize; b_sizes.len()]; a_sizes.len()];
    for (&ga, &gb) in a.iter().zip(b) {
        joint[ga][gb] += 1;
    }

    let sum_joint: f64 = joint
        .iter()
        .flat_map(|row| row.iter())
        .map(|&c| choose2(c))
        .sum();
    let sum_a: f64 = a_sizes.iter().map(|&c| choose2(c)).sum();
    let sum_b: f64 = b_sizes.iter().map(|&c| choose2(c)).sum();
    let expected = sum_a * sum_b / choose2(n);
    let numerator = sum_joint - expected;
    let denominator = 0.5 * (sum_a + sum_b) - expected;
    if denominator == 0.0 {
        return 1.0;
    }
    numerator / denominator
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: the pair-confusion form of the adjusted Rand
    /// index, computed by enumerating every item pair directly.
    fn pair_counting_ari(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let (mut both, mut only_a, mut only_b, mut neither) = (0f64, 0f64, 0f64, 0f64);
        for i in 0..n {
            for j in (i + 1)..n {
                match (a[i] == a[j], b[i] == b[j]) {
                    (true, true) => both += 1.0,
                    (true, false) => only_a += 1.0,
                    (false, true) => only_b += 1.0,
                    (false, false) => neither += 1.0,
                }
            }
        }
        let denominator =
            (both + only_a) * (only_a + neither) + (both + only_b) * (only_b + neither);
        if denominator == 0.0 {
            return 1.0;
        }
        2.0 * (both * neither - only_a * only_b) / denominator
    }

    fn uniform_plan(rows: usize, cols: usize) -> TransportPlan {
        TransportPlan {
            weights: Array2::from_elem((rows, cols), 1.0 / (rows * cols) as f64),
            p: Array1::from_elem(rows, 1.0 / rows as f64),
            q: Array1::from_elem(cols, 1.0 / cols as f64),
            scaling: None,
            beta: 0.1,
            iterations: 0,
            marginal_residual: 0.0,
        }
    }

    #[test]
    fn accuracy_counts_matches() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 2, 3], &[0, 0, 0]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 0, 1, 1], &[1, 1, 1, 0]).unwrap(), 0.5);
    }

    #[test]
    fn accuracy_rejects_empty_and_mismatched_inputs() {
        assert!(matches!(accuracy(&[], &[]), Err(EvalError::Empty)));
        assert!(matches!(
            accuracy(&[1], &[1, 2]),
            Err(EvalError::LengthMismatch { preds: 1, truth: 2 })
        ));
    }

    #[test]
    fn ari_hand_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 1]), 1.0);
        let split_evenly = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]);
        assert!((split_evenly + 0.5).abs() < 1e-12, "got {split_evenly}");
        // One of six views moved off the planted (2,2,2) partition.
        let planted = [0, 0, 1, 1, 2, 2];
        let assigned = [0, 0, 1, 1, 1, 2];
        let ari = adjusted_rand_index(&assigned, &planted);
        assert!((ari - 4.0 / 9.0).abs() < 1e-12, "got {ari}");
        assert!((ari - pair_counting_ari(&assigned, &planted)).abs() < 1e-12);
    }

    #[test]
    fn ari_is_invariant_to_relabeling() {
        let a = [0, 0, 1, 2, 2, 1, 0];
        let b = [1, 1, 0, 2, 2, 0, 2];
        let relabeled_a: Vec<usize> = a.iter().map(|&g| [2, 0, 1][g]).collect();
        let relabeled_b: Vec<usize> = b.iter().map(|&g| [1, 2, 0][g]).collect();
        let reference = adjusted_rand_index(&a, &b);
        assert_eq!(adjusted_rand_index(&relabeled_a, &b), reference);
        assert_eq!(adjusted_rand_index(&a, &relabeled_b), reference);
        assert_eq!(adjusted_rand_index(&relabeled_a, &relabeled_b), reference);
    }

    #[test]
    fn ari_matches_the_pair_counting_oracle_on_random_partitions() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..300 {
            let n = rng.random_range(2..=10usize);
            let ka = rng.random_range(1..=n);
            let kb = rng.random_range(1..=n);
            let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..ka)).collect();
            let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..kb)).collect();
            let fast = adjusted_rand_index(&a, &b);
            let slow = pair_counting_ari(&a, &b);
            assert!(
                (fast - slow).abs() < 1e-12,
                "a={a:?} b={b:?}: {fast} vs {slow}"
            );
        }
    }

    #[test]
    fn ari_degenerate_conventions() {
        assert_eq!(adjusted_rand_index(&[0], &[0]), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 0], &[0, 0, 0]), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 1, 2], &[0, 1, 2]), 1.0);
        // All-one-group vs. a nontrivial partition scores 0.
        assert_eq!(adjusted_rand_index(&[0, 0, 0, 0], &[0, 0, 1, 1]), 0.0);
    }

    #[test]
    fn cluster_recovery_block_plan_scores_one() {
        // Views 0-1 -> cluster 0, views 2-3 -> cluster 1, block-uniform.
        let mut weights = Array2::zeros((4, 2));
        for view in 0..4 {
            weights[[view, view / 2]] = 0.25;
        }
        let plan = TransportPlan {
            weights,
            p: Array1::from_elem(4, 0.25),
            q: Array1::from_elem(2, 0.5),
            scaling: None,
            beta: 0.1,
            iterations: 0,
            marginal_residual: 0.0,
        };
        assert_eq!(cluster_recovery(&plan, &[0, 0, 1, 1]).unwrap(), 1.0);
        // Relabeled planted ids score identically.
        assert_eq!(cluster_recovery(&plan, &[5, 5, 2, 2]).unwrap(), 1.0);
    }

    #[test]
    fn cluster_recovery_uniform_plan_collapses_to_one_group() {
        let plan = uniform_plan(6, 3);
        let score = cluster_recovery(&plan, &[0, 0, 1, 1, 2, 2]).unwrap();
        assert!(score <= 0.0, "degenerate partition must not score above 0");
    }

    #[test]
    fn cluster_recovery_rejects_row_mismatch() {
        let plan = uniform_plan(4, 2);
        assert!(matches!(
            cluster_recovery(&plan, &[0, 1, 0]),
            Err(EvalError::PlanRowMismatch { rows: 4, planted: 3 })
        ));
    }
}
