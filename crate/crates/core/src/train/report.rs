//! Per-epoch training records and the run report.

use serde::{Deserialize, Serialize};

use crate::ot::TransportPlan;

use super::config::TrainConfig;
use super::{Result, TrainError};

/// Averaged losses for one epoch. Terms a mode does not compute are absent:
/// unsupervised runs have no `task` loss, reconstruction appears only when
/// autoencoders are enabled, and `valid` appears only when a validation pool
/// was usable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's labeled batches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<f64>,
    /// Mean multi-view penalty (unweighted) over the epoch's batches.
    pub coupling: f64,
    /// Mean reconstruction error (unweighted) over the epoch's batches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reconstruction: Option<f64>,
    /// Validation metric used for checkpoint selection: cross-entropy on the
    /// full validation pool (semisupervised) or the penalty on a fixed
    /// validation batch (unsupervised).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid: Option<f64>,
}

/// Everything a finished run reports: one record per epoch, the transport
/// plan recomputed with the selected model (transport-based penalties only),
/// and enough metadata to reproduce the run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    pub final_plan: Option<TransportPlan>,
    pub seed: u64,
    pub config: TrainConfig,
    /// Wall-clock duration of the run in seconds. Excluded from serialized
    /// records so that reports are byte-identical across reruns.
    pub wall_clock_secs: f64,
    /// Epoch (1-based) of the restored best-validation checkpoint, when
    /// validation-based selection ran.
    pub selected_epoch: Option<usize>,
}

impl TrainReport {
    /// One JSON object per line, one line per epoch, trailing newline.
    /// Deterministic for a given run.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses the output of [`TrainReport::to_jsonl`] back into records.
    pub fn records_from_jsonl(text: &str) -> Result<Vec<EpochRecord>> {
        text.lines()
            .filter(|line| !line.trim().is_empty())
            .map(|line| {
                serde_json::from_str(line)
                    .map_err(|e| TrainError::Checkpoint(format!("bad report line: {e}")))
            })
            .collect()
    }
}
