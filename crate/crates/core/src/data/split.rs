//! The split-and-unalign training protocol.
//!
//! An aligned, labeled dataset is carved into train/valid/test pools by a
//! stratified split. A small fraction of the training pool keeps its labels
//! and row alignment; the remainder becomes the unlabeled pool, whose rows
//! are (optionally) permuted independently per view so that no cross-view
//! correspondence survives, and whose labels are dropped.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, MultiViewDataset, Result};

/// Fractions and seed controlling [`split_and_unalign`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
    /// Fraction of the training pool kept aligned and labeled.
    pub labeled_aligned_fraction: f64,
    /// Whether to permute the unlabeled pool's rows independently per view.
    /// Alignment-requiring baselines set this false and keep correspondence.
    pub unalign: bool,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.60,
            valid: 0.20,
            test: 0.20,
            labeled_aligned_fraction: 0.05,
            unalign: true,
            seed: 0,
        }
    }
}

/// Original-dataset indices backing each pool. The unlabeled entry records
/// pool *membership* (in ascending original order); it deliberately says
/// nothing about the per-view row order after unalignment.
#[derive(Debug, Clone)]
pub struct SplitIndices {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// The four pools produced by the protocol.
#[derive(Debug, Clone)]
pub struct DataSplit {
    /// Aligned, labeled: feeds the supervised loss term.
    pub train_labeled: MultiViewDataset,
    /// Label-free; row-permuted per view unless the spec kept it aligned.
    pub train_unlabeled: MultiViewDataset,
    /// Aligned, labeled: checkpoint selection.
    pub valid: MultiViewDataset,
    /// Aligned, labeled: final reporting only.
    pub test: MultiViewDataset,
    pub indices: SplitIndices,
}

/// Allocates `total` slots proportionally to `weights` by largest remainder
/// (ties to the earliest index), so every allocation is within one slot of
/// its exact quota.
fn apportion(weights: &[usize], total: usize) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights
        .iter()
        .map(|&w| total as f64 * w as f64 / sum as f64)
        .collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(total - assigned) {
        alloc[i] += 1;
    }
    alloc
}

/// Splits `n` class members into train/valid/test counts by largest
/// remainder over the three fractions.
fn apportion_fractions(n: usize, fracs: [f64; 3]) -> [usize; 3] {
    let quotas = [fracs[0] * n as f64, fracs[1] * n as f64, fracs[2] * n as f64];
    let mut alloc = [
        quotas[0].floor() as usize,
        quotas[1].floor() as usize,
        quotas[2].floor() as usize,
    ];
    let assigned: usize = alloc.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(n - assigned) {
        alloc[i] += 1;
    }
    alloc
}

/// Runs the protocol: stratified train/valid/test split, stratified labeled
/// subset, independent per-view permutation of the unlabeled remainder.
pub fn split_and_unalign(dataset: &MultiViewDataset, spec: &SplitSpec) -> Result<DataSplit> {
    if (spec.train + spec.valid + spec.test - 1.0).abs() > 1e-9 {
        return Err(DataError::BadFractions {
            train: spec.train,
            valid: spec.valid,
            test: spec.test,
        });
    }
    if !(spec.labeled_aligned_fraction > 0.0 && spec.labeled_aligned_fraction <= 1.0) {
        return Err(DataError::BadLabeledFraction(spec.labeled_aligned_fraction));
    }
    if !dataset.aligned() {
        return Err(DataError::InvalidSpec(
            "the split protocol needs an aligned source dataset".into(),
        ));
    }
    let labels = dataset.labels().ok_or(DataError::MissingLabels)?;
    let classes = dataset
        .num_classes()
        .expect("labeled datasets carry a class count");

    // Group sample indices by class and shuffle within each class.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.len() < 3 {
            return Err(DataError::ClassTooSmall {
                class,
                count: members.len(),
            });
        }
        members.shuffle(&mut rng);
    }

    // Stratified three-way split: per class, largest-remainder counts.
    let mut train: Vec<usize> = Vec::new();
    let mut train_class_counts: Vec<usize> = Vec::with_capacity(classes);
    let mut valid: Vec<usize> = Vec::new();
    let mut test: Vec<usize> = Vec::new();
    let mut train_by_class: Vec<Vec<usize>> = Vec::with_capacity(classes);
    for members in &by_class {
        let [n_train, n_valid, _] =
            apportion_fractions(members.len(), [spec.train, spec.valid, spec.test]);
        let (tr, rest) = members.split_at(n_train);
        let (va, te) = rest.split_at(n_valid);
        train.extend_from_slice(tr);
        valid.extend_from_slice(va);
        test.extend_from_slice(te);
        train_by_class.push(tr.to_vec());
        train_class_counts.push(tr.len());
    }

    // Stratified labeled subset of the training pool: total is the rounded
    // fraction (at least one sample), spread across classes by size.
    let total_labeled = ((spec.labeled_aligned_fraction * train.len() as f64).round() as usize)
        .clamp(1, train.len());
    let labeled_per_class = apportion(&train_class_counts, total_labeled);
    let mut labeled: Vec<usize> = Vec::with_capacity(total_labeled);
    let mut unlabeled: Vec<usize> = Vec::new();
    for (members, &take) in train_by_class.iter().zip(&labeled_per_class) {
        labeled.extend_from_slice(&members[..take]);
        unlabeled.extend_from_slice(&members[take..]);
    }

    // Canonical pool order: membership sorted ascending. Row order inside
    // the unlabeled pool is then decided by the per-view permutations alone.
    labeled.sort_unstable();
    unlabeled.sort_unstable();
    valid.sort_unstable();
    test.sort_unstable();

    let src = dataset.provenance();
    let train_labeled = dataset.subset(&labeled, format!("{src} [train_labeled]"));
    let mut train_unlabeled = dataset.subset(&unlabeled, format!("{src} [train_unlabeled]"));
    train_unlabeled.drop_labels();
    if spec.unalign && !unlabeled.is_empty() {
        let pool = unlabeled.len();
        for view in 0..dataset.num_views() {
            let mut perm: Vec<usize> = (0..pool).collect();
            perm.shuffle(&mut rng);
            train_unlabeled.permute_view_rows(view, &perm);
        }
        train_unlabeled.set_aligned(false);
    }
    let valid_ds = dataset.subset(&valid, format!("{src} [valid]"));
    let test_ds = dataset.subset(&test, format!("{src} [test]"));

    Ok(DataSplit {
        train_labeled,
        train_unlabeled,
        valid: valid_ds,
        test: test_ds,
        indices: SplitIndices {
            labeled,
            unlabeled,
            valid,
            test,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    /// Two 1-D views whose single feature encodes the original row index, so
    /// cross-view correspondence is observable from the data.
    fn index_coded_dataset(n: usize, classes: usize) -> MultiViewDataset {
        let col = |_: usize| Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        MultiViewDataset::from_parts(
            vec![col(0), col(1)],
            vec!["a".into(), "b".into()],
            Some((0..n).map(|i| i % classes).collect()),
            Some(classes),
            true,
            None,
            "test".into(),
        )
        .unwrap()
    }

    #[test]
    fn default_split_of_100_gives_the_documented_sizes() {
        let ds = index_coded_dataset(100, 4);
        let split = split_and_unalign(&ds, &SplitSpec::default()).unwrap();
        assert_eq!(split.indices.labeled.len() + split.indices.unlabeled.len(), 60);
        assert_eq!(split.indices.valid.len(), 20);
        assert_eq!(split.indices.test.len(), 20);
        assert_eq!(split.indices.labeled.len(), 3);
        assert_eq!(split.train_labeled.num_samples(), 3);
        assert_eq!(split.train_unlabeled.num_samples(), 57);
    }

    #[test]
    fn split_is_a_partition_of_the_original_indices() {
        let ds = index_coded_dataset(103, 3);
        let split = split_and_unalign(&ds, &SplitSpec::default()).unwrap();
        let mut all: Vec<usize> = Vec::new();
        all.extend(&split.indices.labeled);
        all.extend(&split.indices.unlabeled);
        all.extend(&split.indices.valid);
        all.extend(&split.indices.test);
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
    }

    #[test]
    fn split_is_stratified_within_one_sample_per_class() {
        let ds = index_coded_dataset(200, 5);
        let split = split_and_unalign(&ds, &SplitSpec::default()).unwrap();
        let labels = ds.labels().unwrap();
        for (pool, frac) in [
            (&split.indices.valid, 0.2),
            (&split.indices.test, 0.2),
        ] {
            for class in 0..5 {
                let in_pool = pool.iter().filter(|&&i| labels[i] == class).count();
                let class_n = labels.iter().filter(|&&y| y == class).count();
                assert!(
                    (in_pool as f64 - frac * class_n as f64).abs() <= 1.0,
                    "class {class}: {in_pool} of {class_n}"
                );
            }
        }
    }

    #[test]
    fn full_labeled_fraction_leaves_no_unlabeled_pool() {
        let ds = index_coded_dataset(60, 3);
        let spec = SplitSpec {
            labeled_aligned_fraction: 1.0,
            ..SplitSpec::default()
        };
        let split = split_and_unalign(&ds, &spec).unwrap();
        assert!(split.indices.unlabeled.is_empty());
        assert_eq!(split.train_labeled.num_samples(), 36);
        assert!(split.train_unlabeled.aligned());
        assert!(split.train_labeled.labels().is_some());
    }

    #[test]
    fn unaligned_pool_is_a_permutation_per_view() {
        let ds = index_coded_dataset(90, 3);
        let split = split_and_unalign(&ds, &SplitSpec::default()).unwrap();
        let pool = &split.train_unlabeled;
        assert!(!pool.aligned());
        assert!(pool.labels().is_none());
        // Each view holds exactly the pool's rows, reordered.
        for view in 0..2 {
            let mut got: Vec<f64> = pool.view(view).column(0).to_vec();
            got.sort_by(f64::total_cmp);
            let want: Vec<f64> = split.indices.unlabeled.iter().map(|&i| i as f64).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn aligned_mode_keeps_row_correspondence() {
        let ds = index_coded_dataset(90, 3);
        let spec = SplitSpec {
            unalign: false,
            ..SplitSpec::default()
        };
        let split = split_and_unalign(&ds, &spec).unwrap();
        assert!(split.train_unlabeled.aligned());
        assert_eq!(split.train_unlabeled.view(0), split.train_unlabeled.view(1));
    }

    #[test]
    fn cross_view_fixed_points_average_about_one() {
        // After independent permutation the relative shuffle is uniform, so
        // the expected number of rows still co-indexed across two views is 1
        // regardless of pool size.
        let ds = index_coded_dataset(120, 3);
        let mut total = 0usize;
        let trials = 100;
        for seed in 0..trials {
            let spec = SplitSpec {
                seed,
                ..SplitSpec::default()
            };
            let split = split_and_unalign(&ds, &spec).unwrap();
            let pool = &split.train_unlabeled;
            let fixed = (0..pool.num_samples())
                .filter(|&j| pool.view(0)[[j, 0]] == pool.view(1)[[j, 0]])
                .count();
            total += fixed;
        }
        let mean = total as f64 / trials as f64;
        assert!((0.55..=1.45).contains(&mean), "mean fixed points {mean}");
    }

    #[test]
    fn same_seed_reproduces_the_split_exactly() {
        let ds = index_coded_dataset(90, 3);
        let a = split_and_unalign(&ds, &SplitSpec::default()).unwrap();
        let b = split_and_unalign(&ds, &SplitSpec::default()).unwrap();
        assert_eq!(a.indices.labeled, b.indices.labeled);
        assert_eq!(a.train_unlabeled.view(0), b.train_unlabeled.view(0));

        let c = split_and_unalign(
            &ds,
            &SplitSpec {
                seed: 1,
                ..SplitSpec::default()
            },
        )
        .unwrap();
        assert_ne!(a.train_unlabeled.view(0), c.train_unlabeled.view(0));
    }

    #[test]
    fn tiny_classes_and_bad_fractions_are_rejected() {
        let tiny = MultiViewDataset::from_parts(
            vec![Array2::zeros((4, 1))],
            vec!["a".into()],
            Some(vec![0, 0, 0, 1]),
            Some(2),
            true,
            None,
            "test".into(),
        )
        .unwrap();
        assert!(matches!(
            split_and_unalign(&tiny, &SplitSpec::default()),
            Err(DataError::ClassTooSmall { class: 1, count: 1 })
        ));

        let ds = index_coded_dataset(30, 3);
        let bad = SplitSpec {
            train: 0.5,
            ..SplitSpec::default()
        };
        assert!(matches!(
            split_and_unalign(&ds, &bad),
            Err(DataError::BadFractions { .. })
        ));

        let unlabeled = MultiViewDataset::from_parts(
            vec![Array2::zeros((10, 1))],
            vec!["a".into()],
            None,
            None,
            true,
            None,
            "test".into(),
        )
        .unwrap();
        assert!(matches!(
            split_and_unalign(&unlabeled, &SplitSpec::default()),
            Err(DataError::MissingLabels)
        ));
    }

    #[test]
    fn apportion_matches_hand_counts() {
        assert_eq!(apportion_fractions(20, [0.6, 0.2, 0.2]), [12, 4, 4]);
        assert_eq!(apportion_fractions(11, [0.6, 0.2, 0.2]), [7, 2, 2]);
        assert_eq!(apportion_fractions(3, [0.6, 0.2, 0.2]), [2, 1, 0]);
        assert_eq!(apportion(&[12, 12, 12], 3), vec![1, 1, 1]);
        assert_eq!(apportion(&[10, 1, 1], 3), vec![3, 0, 0]);
        assert_eq!(apportion(&[0, 0], 0), vec![0, 0]);
    }
}
