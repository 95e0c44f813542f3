//! Planted-cluster synthetic data.
//!
//! The generator plants two structures at once:
//!
//! - a **view partition**: each view belongs to one cluster, and all views in
//!   a cluster observe (their own linear map of) the *same* latent codes, so
//!   same-cluster views share a distribution and cross-cluster views do not;
//! - a **class structure**: within each cluster, codes are drawn around
//!   class-conditioned means, with a per-cluster separation knob deciding how
//!   much class signal that cluster's views carry (zero = pure noise w.r.t.
//!   the labels).
//!
//! Both structures are what the evaluation module scores: cluster recovery
//! against the planted partition, and classification accuracy against the
//! labels.

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DataError, MultiViewDataset, Result};

/// Full description of one synthetic dataset. Deserialization fills missing
/// fields from the defaults, so partial spec files stay valid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    /// Number of views `S`.
    pub views: usize,
    /// Number of planted view clusters.
    pub clusters: usize,
    /// View -> cluster map, length `views`, every cluster non-empty.
    pub assignments: Vec<usize>,
    /// Dimension of each cluster's latent codes.
    pub latent_dim: usize,
    /// Number of samples `N`.
    pub samples: usize,
    /// Number of classes (labels are exactly balanced, then shuffled).
    pub classes: usize,
    /// Observed dimension of each view, length `views`.
    pub view_dims: Vec<usize>,
    /// Standard deviation of the additive observation noise.
    pub noise_sigma: f64,
    /// Distance scale between class-conditioned code means.
    pub class_sep: f64,
    /// Per-cluster multiplier on `class_sep`; `None` means 1 everywhere.
    /// A cluster at 0 carries no class signal at all.
    pub cluster_class_sep: Option<Vec<f64>>,
    /// Relative spread of each view's observation map around its cluster's
    /// shared base map. Views of one cluster see correlated projections of
    /// the same codes — the way feature sets of the same objects correlate
    /// in real multi-view data — while still owning their own map. At 0 the
    /// same-dimension views of a cluster coincide up to noise; large values
    /// decorrelate them entirely.
    pub map_jitter: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            views: 6,
            clusters: 3,
            assignments: vec![0, 0, 1, 1, 2, 2],
            latent_dim: 8,
            samples: 2000,
            classes: 4,
            view_dims: vec![16; 6],
            noise_sigma: 0.1,
            class_sep: 2.0,
            cluster_class_sep: None,
            map_jitter: 0.05,
            seed: 0,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(DataError::InvalidSpec(msg));
        if self.views == 0 {
            return fail("need at least one view".into());
        }
        if self.clusters == 0 {
            return fail("need at least one cluster".into());
        }
        if self.assignments.len() != self.views {
            return fail(format!(
                "{} assignments for {} views",
                self.assignments.len(),
                self.views
            ));
        }
        let mut used = vec![false; self.clusters];
        for (view, &cluster) in self.assignments.iter().enumerate() {
            if cluster >= self.clusters {
                return fail(format!(
                    "view {view} assigned to cluster {cluster}, but there are only {} clusters",
                    self.clusters
                ));
            }
            used[cluster] = true;
        }
        if let Some(empty) = used.iter().position(|&u| !u) {
            return fail(format!("cluster {empty} has no views"));
        }
        if self.view_dims.len() != self.views {
            return fail(format!(
                "{} view dims for {} views",
                self.view_dims.len(),
                self.views
            ));
        }
        if self.view_dims.iter().any(|&d| d == 0) {
            return fail("view dims must be positive".into());
        }
        if self.latent_dim == 0 {
            return fail("latent dim must be positive".into());
        }
        if self.classes < 2 {
            return fail("need at least two classes".into());
        }
        if self.samples < self.classes {
            return fail(format!(
                "{} samples cannot cover {} classes",
                self.samples, self.classes
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!("noise sigma {} must be >= 0", self.noise_sigma));
        }
        if !(self.class_sep >= 0.0 && self.class_sep.is_finite()) {
            return fail(format!("class separation {} must be >= 0", self.class_sep));
        }
        if let Some(ref seps) = self.cluster_class_sep {
            if seps.len() != self.clusters {
                return fail(format!(
                    "{} per-cluster separations for {} clusters",
                    seps.len(),
                    self.clusters
                ));
            }
            if seps.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
                return fail("per-cluster separations must be >= 0".into());
            }
        }
        if !(self.map_jitter >= 0.0 && self.map_jitter.is_finite()) {
            return fail(format!("map jitter {} must be >= 0", self.map_jitter));
        }
        Ok(())
    }

    /// One-line description used as dataset provenance.
    pub fn describe(&self) -> String {
        format!(
            "synthetic(views={}, clusters={}, samples={}, classes={}, noise={}, seed={})",
            self.views, self.clusters, self.samples, self.classes, self.noise_sigma, self.seed
        )
    }
}

fn normal_matrix<R: rand::Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        let draw: f64 = StandardNormal.sample(rng);
        draw * scale
    })
}

/// Generates the dataset described by `spec`. Deterministic: the same spec
/// always yields the same dataset. Views are standardized before return, so
/// the output matches what a save/load round trip would produce up to
/// floating-point text precision.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<MultiViewDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.samples;

    // Balanced labels, shuffled.
    let mut labels: Vec<usize> = (0..n).map(|i| i % spec.classes).collect();
    labels.shuffle(&mut rng);

    // Class-conditioned code means per cluster, scaled by the cluster's
    // class-separation knob.
    let sep = |k: usize| {
        spec.class_sep
            * spec
                .cluster_class_sep
                .as_ref()
                .map_or(1.0, |seps| seps[k])
    };
    let means: Vec<Array2<f64>> = (0..spec.clusters)
        .map(|k| normal_matrix(spec.classes, spec.latent_dim, sep(k), &mut rng))
        .collect();

    // Per-cluster latent codes: row n is mean[labels[n]] + unit noise.
    // Same-cluster views will observe the SAME code matrix.
    let codes: Vec<Array2<f64>> = (0..spec.clusters)
        .map(|k| {
            let mut c = normal_matrix(n, spec.latent_dim, 1.0, &mut rng);
            for (row, &y) in labels.iter().enumerate() {
                for j in 0..spec.latent_dim {
                    c[[row, j]] += means[k][[y, j]];
                }
            }
            c
        })
        .collect();

    // Per-view observation: fixed random linear map of the cluster's codes
    // plus isotropic noise. Each cluster owns a base map (drawn at its widest
    // view's dimension); a view's map is the leading columns of that base
    // plus a per-view perturbation scaled by `map_jitter`. Same-cluster views
    // therefore see correlated projections — without that, every view is an
    // unrelated random rotation and no cross-view structure survives.
    let map_scale = 1.0 / (spec.latent_dim as f64).sqrt();
    let widest: Vec<usize> = (0..spec.clusters)
        .map(|k| {
            spec.assignments
                .iter()
                .zip(&spec.view_dims)
                .filter(|(&c, _)| c == k)
                .map(|(_, &d)| d)
                .max()
                .unwrap_or(0)
        })
        .collect();
    let base_maps: Vec<Array2<f64>> = widest
        .iter()
        .map(|&w| normal_matrix(spec.latent_dim, w, map_scale, &mut rng))
        .collect();

    let mut views = Vec::with_capacity(spec.views);
    let mut names = Vec::with_capacity(spec.views);
    for (v, &cluster) in spec.assignments.iter().enumerate() {
        let d = spec.view_dims[v];
        let mut map = base_maps[cluster].slice(s![.., ..d]).to_owned();
        if spec.map_jitter > 0.0 {
            let wobble = normal_matrix(spec.latent_dim, d, spec.map_jitter * map_scale, &mut rng);
            map += &wobble;
        }
        let mut x = codes[cluster].dot(&map);
        if spec.noise_sigma > 0.0 {
            let noise = normal_matrix(n, d, spec.noise_sigma, &mut rng);
            x += &noise;
        }
        views.push(x);
        names.push(format!("view{v}"));
    }

    let mut dataset = MultiViewDataset::from_parts(
        views,
        names,
        Some(labels),
        Some(spec.classes),
        true,
        Some(spec.assignments.clone()),
        spec.describe(),
    )?;
    dataset.standardize();
    Ok(dataset)
}
