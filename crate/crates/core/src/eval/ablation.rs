//! View-ablation study: how much each view contributes to semisupervised
//! accuracy.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split_and_unalign, MultiViewDataset, SplitSpec};
use crate::train::{train_semisupervised, TrainConfig};

use super::metrics::accuracy;
use super::{EvalError, Result};

/// One aggregate row: the all-views baseline or one removed view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// `"All"` for the all-views baseline, otherwise the removed view's name.
    pub label: String,
    /// Mean test accuracy over the trials.
    pub mean_accuracy: f64,
    /// Population standard deviation over the trials (0 for one trial).
    pub std_accuracy: f64,
}

/// Ablation results: the baseline row first, then one row per removed view
/// in view order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub trials: usize,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| EvalError::BadFile {
            path: "<ablation report>".into(),
            message: e.to_string(),
        })
    }

    /// The all-views baseline row.
    pub fn baseline(&self) -> &AblationRow {
        &self.rows[0]
    }

    /// The removal row with the lowest mean accuracy: the view whose removal
    /// hurts most.
    pub fn most_damaging(&self) -> Option<&AblationRow> {
        self.rows[1..]
            .iter()
            .min_by(|a, b| a.mean_accuracy.total_cmp(&b.mean_accuracy))
    }
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, variance.sqrt())
}

/// One semisupervised trial on one dataset variant: split, train, and score
/// test accuracy. Trial `t` offsets both the split seed and the run seed so
/// trials differ in data assignment and initialization but stay reproducible.
fn trial_accuracy(
    dataset: &MultiViewDataset,
    split_spec: &SplitSpec,
    config: &TrainConfig,
    trial: u64,
) -> Result<f64> {
    let mut spec = split_spec.clone();
    spec.seed = split_spec.seed.wrapping_add(trial);
    spec.unalign = !config.regularizer.requires_alignment();
    let mut trial_config = config.clone();
    trial_config.seed = config.seed.wrapping_add(trial);

    let split = split_and_unalign(dataset, &spec)?;
    let (model, _) = train_semisupervised(&split, &trial_config)?;

    let test = &split.test;
    let indices: Vec<usize> = (0..test.num_samples()).collect();
    let batches: Vec<Array2<f64>> = (0..test.num_views())
        .map(|view| test.batch(view, &indices))
        .collect();
    let views: Vec<&Array2<f64>> = batches.iter().collect();
    let preds = model.predict(&views)?;
    let truth = test.labels_at(&indices)?;
    accuracy(&preds, &truth)
}

/// Retrains the semisupervised model with each view removed in turn
/// (`trials` independent splits and seeds per variant) and reports mean and
/// standard deviation of test accuracy next to the all-views baseline.
///
/// Trials are independent and run in parallel; the report is ordered and
/// bitwise reproducible for fixed inputs.
pub fn run_ablation(
    dataset: &MultiViewDataset,
    split_spec: &SplitSpec,
    config: &TrainConfig,
    trials: usize,
) -> Result<AblationReport> {
    let views = dataset.num_views();
    if views < 2 {
        return Err(EvalError::TooFewViews(views));
    }
    if trials == 0 {
        return Err(EvalError::NoTrials);
    }

    let removals: Vec<MultiViewDataset> = (0..views)
        .map(|view| dataset.without_view(view))
        .collect::<std::result::Result<_, _>>()?;
    let variants: Vec<&MultiViewDataset> =
        std::iter::once(dataset).chain(removals.iter()).collect();

    let jobs: Vec<(usize, usize)> = (0..variants.len())
        .flat_map(|variant| (0..trials).map(move |trial| (variant, trial)))
        .collect();
    let outcomes: Vec<((usize, usize), f64)> = jobs
        .into_par_iter()
        .map(|(variant, trial)| {
            trial_accuracy(variants[variant], split_spec, config, trial as u64)
                .map(|acc| ((variant, trial), acc))
        })
        .collect::<Result<_>>()?;

    let mut accuracies = vec![vec![0.0f64; trials]; variants.len()];
    for ((variant, trial), acc) in outcomes {
        accuracies[variant][trial] = acc;
    }

    let labels = std::iter::once("All".to_string()).chain(
        dataset
            .view_names()
            .iter()
            .map(|name| name.to_string()),
    );
    let rows = labels
        .zip(&accuracies)
        .map(|(label, values)| {
            let (mean_accuracy, std_accuracy) = mean_and_std(values);
            AblationRow {
                label,
                mean_accuracy,
                std_accuracy,
            }
        })
        .collect();
    Ok(AblationReport { trials, rows })
}
