//! Multi-view dataset ingestion, splitting, and synthesis.
//!
//! A [`MultiViewDataset`] holds `S` view matrices over the same `N` samples
//! (row = sample), optional class labels, and an alignment flag that records
//! whether row `n` still refers to the same underlying object in every view.
//! Datasets arrive from three sources:
//!
//! - [`load_manifest`]: a JSON manifest naming per-view CSV files (one sample
//!   per row, no header) plus an optional labels CSV.
//! - [`generate_synthetic`]: a planted-cluster generator — views in the same
//!   planted cluster observe linear maps of *the same* latent codes, views in
//!   different clusters observe independent codes, and class structure enters
//!   through class-conditioned code means.
//! - [`split_and_unalign`]: the training protocol — a stratified
//!   train/valid/test split where a small fraction of the training pool keeps
//!   its labels and row alignment, and the rest is independently row-permuted
//!   per view with labels dropped.
//!
//! Every ingestion path standardizes each view to zero mean / unit variance
//! per feature, so downstream distances never depend on raw feature scales.

mod manifest;
mod split;
mod synth;

pub use manifest::{load_manifest, write_dataset};
pub use split::{split_and_unalign, DataSplit, SplitIndices, SplitSpec};
pub use synth::{generate_synthetic, SynthSpec};

use ndarray::{Array2, Axis};
use thiserror::Error;

/// Errors from dataset loading, validation, splitting, and synthesis.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: invalid JSON: {message}")]
    Json { path: String, message: String },

    #[error("{file}:{line}: {message}")]
    Csv {
        file: String,
        line: usize,
        message: String,
    },

    #[error("{file}:{line}: expected {expected} columns, found {found}")]
    RaggedRow {
        file: String,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("view files disagree on sample count: {file_a} has {n_a} rows, {file_b} has {n_b}")]
    RowCountMismatch {
        file_a: String,
        n_a: usize,
        file_b: String,
        n_b: usize,
    },

    #[error("labels file {file} has {got} entries for {expected} samples")]
    LabelCountMismatch {
        file: String,
        expected: usize,
        got: usize,
    },

    #[error("label {label} at sample {index} is outside 0..{classes}")]
    LabelOutOfRange {
        label: usize,
        index: usize,
        classes: usize,
    },

    #[error("class {class} has no samples; class ids must be contiguous from 0")]
    EmptyClass { class: usize },

    #[error("dataset has no labels, which this operation requires")]
    MissingLabels,

    #[error("split fractions {train}+{valid}+{test} must sum to 1")]
    BadFractions { train: f64, valid: f64, test: f64 },

    #[error("labeled fraction {0} must lie in (0, 1]")]
    BadLabeledFraction(f64),

    #[error("class {class} has {count} samples; stratified splitting needs at least 3")]
    ClassTooSmall { class: usize, count: usize },

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("dataset already exists at {0}; pass force to overwrite")]
    OutputExists(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// `S` views of the same `N` samples, with optional labels.
#[derive(Debug, Clone)]
pub struct MultiViewDataset {
    /// One `N x D_s` matrix per view; row = sample.
    views: Vec<Array2<f64>>,
    /// Display names, one per view.
    view_names: Vec<String>,
    /// Class ids in `0..num_classes`, when known.
    labels: Option<Vec<usize>>,
    /// Number of classes when labels are present.
    num_classes: Option<usize>,
    /// Whether row `n` refers to the same object in every view.
    aligned: bool,
    /// Planted view->cluster assignment, for synthetic data.
    planted: Option<Vec<usize>>,
    /// Where this dataset came from (path or generator description).
    provenance: String,
}

impl MultiViewDataset {
    /// Assembles a dataset from parts, validating row counts and labels.
    pub fn from_parts(
        views: Vec<Array2<f64>>,
        view_names: Vec<String>,
        labels: Option<Vec<usize>>,
        num_classes: Option<usize>,
        aligned: bool,
        planted: Option<Vec<usize>>,
        provenance: String,
    ) -> Result<Self> {
        if views.is_empty() {
            return Err(DataError::InvalidSpec("dataset needs at least one view".into()));
        }
        if view_names.len() != views.len() {
            return Err(DataError::InvalidSpec(format!(
                "{} view names for {} views",
                view_names.len(),
                views.len()
            )));
        }
        let n = views[0].nrows();
        for (i, v) in views.iter().enumerate() {
            if v.nrows() != n {
                return Err(DataError::RowCountMismatch {
                    file_a: view_names[0].clone(),
                    n_a: n,
                    file_b: view_names[i].clone(),
                    n_b: v.nrows(),
                });
            }
        }
        if let Some(ref l) = labels {
            if l.len() != n {
                return Err(DataError::LabelCountMismatch {
                    file: "labels".into(),
                    expected: n,
                    got: l.len(),
                });
            }
            let classes = match num_classes {
                Some(c) => c,
                None => l.iter().copied().max().map_or(0, |m| m + 1),
            };
            validate_labels(l, classes)?;
        }
        let num_classes = if labels.is_some() {
            num_classes.or_else(|| {
                labels
                    .as_ref()
                    .and_then(|l| l.iter().copied().max().map(|m| m + 1))
            })
        } else {
            None
        };
        Ok(MultiViewDataset {
            views,
            view_names,
            labels,
            num_classes,
            aligned,
            planted,
            provenance,
        })
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn num_samples(&self) -> usize {
        self.views[0].nrows()
    }

    pub fn view_dim(&self, s: usize) -> usize {
        self.views[s].ncols()
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.ncols()).collect()
    }

    pub fn view(&self, s: usize) -> &Array2<f64> {
        &self.views[s]
    }

    pub fn view_names(&self) -> &[String] {
        &self.view_names
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.num_classes
    }

    pub fn aligned(&self) -> bool {
        self.aligned
    }

    pub fn planted(&self) -> Option<&[usize]> {
        self.planted.as_deref()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Z-scores every feature of every view in place (population standard
    /// deviation; constant features are centered and left at zero).
    pub fn standardize(&mut self) {
        for view in &mut self.views {
            standardize_columns(view);
        }
    }

    /// Extracts the given view's rows `indices` as a `D_s x B` batch
    /// (column = sample), the layout the encoders consume.
    pub fn batch(&self, view: usize, indices: &[usize]) -> Array2<f64> {
        let v = &self.views[view];
        let d = v.ncols();
        let mut out = Array2::zeros((d, indices.len()));
        for (b, &i) in indices.iter().enumerate() {
            for j in 0..d {
                out[[j, b]] = v[[i, j]];
            }
        }
        out
    }

    /// Gathers the labels at `indices`.
    pub fn labels_at(&self, indices: &[usize]) -> Result<Vec<usize>> {
        let labels = self.labels.as_ref().ok_or(DataError::MissingLabels)?;
        Ok(indices.iter().map(|&i| labels[i]).collect())
    }

    /// A new dataset holding only rows `indices` (same order in every view),
    /// preserving labels and alignment.
    pub fn subset(&self, indices: &[usize], provenance: String) -> Self {
        let views = self
            .views
            .iter()
            .map(|v| gather_rows(v, indices))
            .collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        MultiViewDataset {
            views,
            view_names: self.view_names.clone(),
            labels,
            num_classes: self.num_classes,
            aligned: self.aligned,
            planted: self.planted.clone(),
            provenance,
        }
    }

    /// A copy with one view removed (for ablation studies).
    pub fn without_view(&self, view: usize) -> Result<Self> {
        if self.views.len() < 2 {
            return Err(DataError::InvalidSpec(
                "cannot remove a view from a single-view dataset".into(),
            ));
        }
        if view >= self.views.len() {
            return Err(DataError::InvalidSpec(format!(
                "view {view} out of range for {} views",
                self.views.len()
            )));
        }
        let keep = |i: usize| i != view;
        Ok(MultiViewDataset {
            views: filter_indexed(&self.views, keep),
            view_names: filter_indexed(&self.view_names, keep),
            labels: self.labels.clone(),
            num_classes: self.num_classes,
            aligned: self.aligned,
            planted: self
                .planted
                .as_ref()
                .map(|p| filter_indexed(p, keep)),
            provenance: format!("{} (view {} removed)", self.provenance, view),
        })
    }

    /// Replaces one view's rows with a permuted copy (internal to the
    /// unalignment protocol).
    pub(crate) fn permute_view_rows(&mut self, view: usize, perm: &[usize]) {
        self.views[view] = gather_rows(&self.views[view], perm);
    }

    pub(crate) fn drop_labels(&mut self) {
        self.labels = None;
        self.num_classes = None;
    }

    pub(crate) fn set_aligned(&mut self, aligned: bool) {
        self.aligned = aligned;
    }
}

fn filter_indexed<T: Clone>(items: &[T], keep: impl Fn(usize) -> bool) -> Vec<T> {
    items
        .iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .map(|(_, x)| x.clone())
        .collect()
}

fn gather_rows(m: &Array2<f64>, indices: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((indices.len(), m.ncols()));
    for (r, &i) in indices.iter().enumerate() {
        out.row_mut(r).assign(&m.row(i));
    }
    out
}

/// Checks class ids are in range and every class `0..classes` is used.
fn validate_labels(labels: &[usize], classes: usize) -> Result<()> {
    let mut seen = vec![false; classes];
    for (index, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(DataError::LabelOutOfRange {
                label,
                index,
                classes,
            });
        }
        seen[label] = true;
    }
    for (class, used) in seen.iter().enumerate() {
        if !used {
            return Err(DataError::EmptyClass { class });
        }
    }
    Ok(())
}

/// Z-scores each column with the population standard deviation; columns with
/// vanishing spread are centered only.
pub(crate) fn standardize_columns(m: &mut Array2<f64>) {
    let n = m.nrows() as f64;
    if n == 0.0 {
        return;
    }
    for mut col in m.axis_iter_mut(Axis(1)) {
        let mean = col.sum() / n;
        let var = col.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        let denom = if std < 1e-12 { 1.0 } else { std };
        col.mapv_inplace(|x| (x - mean) / denom);
    }
}
