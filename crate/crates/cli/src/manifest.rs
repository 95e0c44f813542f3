//! Run manifests: a JSON record of what a command did and with what inputs,
//! written once per run. Re-running the same command with the manifest's
//! config and seed reproduces checkpoints and reports byte for byte (the
//! manifest itself records wall-clock time, which is allowed to differ).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use hotmv_core::data::{SplitSpec, SynthSpec};
use hotmv_core::train::TrainConfig;

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    /// Subcommand name: synth | train | eval | ablate | export-plan.
    pub command: String,
    /// Library/CLI version that produced the run.
    pub version: String,
    /// Master seed the run used.
    pub seed: u64,
    /// Provenance string of the dataset involved, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    /// Training mode, for `train` runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    /// Fully resolved training config (defaults materialized).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<TrainConfig>,
    /// Generator settings, for `synth` runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
    /// Split protocol applied before training or scoring.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSpec>,
    /// Trials per variant, for `ablate` runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// Input paths the run read (dataset dir, checkpoint, plan file).
    pub inputs: BTreeMap<String, String>,
    /// Output paths the run wrote, keyed by artifact kind.
    pub artifacts: BTreeMap<String, String>,
    pub wall_clock_secs: f64,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            dataset: None,
            mode: None,
            config: None,
            synth: None,
            split: None,
            trials: None,
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            wall_clock_secs: 0.0,
        }
    }

    pub fn input(&mut self, key: &str, path: &Path) {
        self.inputs
            .insert(key.to_string(), path.display().to_string());
    }

    pub fn artifact(&mut self, key: &str, path: &Path) {
        self.artifacts
            .insert(key.to_string(), path.display().to_string());
    }

    pub fn to_json_string(&self) -> anyhow::Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}
