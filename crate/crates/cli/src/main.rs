//! `hotmv` — train, evaluate, and ablate multi-view models from the shell.
//!
//! Subcommands: `synth` (generate a synthetic dataset directory), `train`
//! (fit a model and write checkpoint/report artifacts), `eval` (score a
//! checkpoint on a dataset split), `ablate` (leave-one-view-out study), and
//! `export-plan` (render a saved transport plan as a CSV heatmap).
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error
//! (missing/ill-formed files, dataset mismatches), 3 numerical failure.

mod commands;
mod manifest;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use hotmv_core::data::DataError;
use hotmv_core::eval::EvalError;
use hotmv_core::ot::OtError;
use hotmv_core::regularizers::RegularizerKind;
use hotmv_core::train::TrainError;

#[derive(Parser)]
#[command(name = "hotmv", version, about = "Multi-view representation learning with transport-based co-regularization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-view dataset directory
    Synth(SynthArgs),
    /// Train a model and write checkpoint, report, and plan artifacts
    Train(TrainArgs),
    /// Score a saved checkpoint on a dataset split
    Eval(EvalArgs),
    /// Leave-one-view-out ablation study
    Ablate(AblateArgs),
    /// Render a saved transport plan as a CSV heatmap
    ExportPlan(ExportPlanArgs),
}

#[derive(clap::Args)]
struct SynthArgs {
    /// Output directory for the dataset files
    #[arg(long)]
    out: PathBuf,
    /// TOML file with generator settings; missing keys take defaults
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Dataset name recorded in the manifest
    #[arg(long, default_value = "synthetic")]
    name: String,
    /// Number of samples (overrides the spec file)
    #[arg(long)]
    samples: Option<usize>,
    /// Observation noise level (overrides the spec file)
    #[arg(long)]
    noise: Option<f64>,
    /// Generator seed (overrides the spec file)
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite an existing dataset directory
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Unsupervised,
    Semisupervised,
}

/// Training-config fields exposed as flags. Precedence: flags over config
/// file over built-in defaults.
#[derive(clap::Args, Default, Clone)]
struct ConfigOverrides {
    /// TOML config file; unknown keys are rejected
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for initialization, batching, and projections
    #[arg(long)]
    seed: Option<u64>,
    /// Coupling penalty to train with
    #[arg(long, value_parser = parse_regularizer)]
    regularizer: Option<RegularizerKind>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Weight of the coupling penalty in the semisupervised objective
    #[arg(long)]
    gamma: Option<f64>,
    /// Weight of the reconstruction term
    #[arg(long)]
    tau: Option<f64>,
    /// Weight of the per-view orthogonality penalty
    #[arg(long)]
    alpha: Option<f64>,
    /// Entropic regularization strength for transport solves
    #[arg(long)]
    beta: Option<f64>,
    /// Number of latent clusters (reference batches for grouped penalties)
    #[arg(long)]
    num_clusters: Option<usize>,
    /// Train per-view decoders and add the reconstruction term
    #[arg(long)]
    use_autoencoder: Option<bool>,
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Dataset directory (contains manifest.json)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for run artifacts
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training mode
    #[arg(long, value_enum, default_value = "semisupervised")]
    mode: Mode,
    /// Fraction of the training pool kept labeled and aligned
    #[arg(long, default_value_t = 0.05)]
    labeled_fraction: f64,
    #[command(flatten)]
    overrides: ConfigOverrides,
    /// Print the resolved config as TOML and exit
    #[arg(long)]
    print_config: bool,
    /// Overwrite artifacts from a previous run
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalSplit {
    /// The whole dataset, no split applied
    Full,
    TrainLabeled,
    Valid,
    Test,
}

impl EvalSplit {
    fn label(self) -> &'static str {
        match self {
            EvalSplit::Full => "full",
            EvalSplit::TrainLabeled => "train-labeled",
            EvalSplit::Valid => "valid",
            EvalSplit::Test => "test",
        }
    }
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Checkpoint file written by `train`
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory (contains manifest.json)
    #[arg(long)]
    data: PathBuf,
    /// Output directory for accuracy.json and the run manifest
    #[arg(long)]
    out: PathBuf,
    /// Which split to score
    #[arg(long, value_enum, default_value = "test")]
    split: EvalSplit,
    /// Split seed; must match the training run to score the same partition
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Labeled fraction used when the split was drawn
    #[arg(long, default_value_t = 0.05)]
    labeled_fraction: f64,
    /// Overwrite artifacts from a previous run
    #[arg(long)]
    force: bool,
}

#[derive(clap::Args)]
struct AblateArgs {
    /// Dataset directory (contains manifest.json)
    #[arg(long)]
    data: PathBuf,
    /// Output directory for ablation.json and the run manifest
    #[arg(long)]
    out: PathBuf,
    /// Independent trials per dataset variant
    #[arg(long, default_value_t = 5)]
    trials: usize,
    /// Fraction of the training pool kept labeled and aligned
    #[arg(long, default_value_t = 0.05)]
    labeled_fraction: f64,
    #[command(flatten)]
    overrides: ConfigOverrides,
    /// Overwrite artifacts from a previous run
    #[arg(long)]
    force: bool,
}

#[derive(clap::Args)]
struct ExportPlanArgs {
    /// Transport-plan JSON written by `train`
    #[arg(long)]
    plan: PathBuf,
    /// Output directory for heatmap.csv and its JSON sidecar
    #[arg(long)]
    out: PathBuf,
    /// Dataset directory; when given, rows are labeled with its view names
    #[arg(long)]
    data: Option<PathBuf>,
    /// Overwrite artifacts from a previous run
    #[arg(long)]
    force: bool,
}

fn parse_regularizer(s: &str) -> Result<RegularizerKind, String> {
    s.parse()
}

/// Errors raised directly by command plumbing, tagged with their exit code.
#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

fn exit_code_for(err: &anyhow::Error) -> i32 {
    if let Some(cli) = err.downcast_ref::<CliError>() {
        return match cli {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        };
    }
    if let Some(train) = err.downcast_ref::<TrainError>() {
        return match train {
            TrainError::Config(_) => 1,
            TrainError::BatchTooLarge { .. }
            | TrainError::NeedsAlignedData(_)
            | TrainError::NoLabeledPool
            | TrainError::NoUnlabeledPool
            | TrainError::MissingLabels
            | TrainError::MissingClassCount
            | TrainError::NoClassifier
            | TrainError::DatasetMismatch(_)
            | TrainError::Checkpoint(_)
            | TrainError::Io(_)
            | TrainError::Data(_) => 2,
            _ => 3,
        };
    }
    if err.downcast_ref::<DataError>().is_some() {
        return 2;
    }
    if let Some(eval) = err.downcast_ref::<EvalError>() {
        return match eval {
            EvalError::Io { .. } | EvalError::BadFile { .. } => 2,
            EvalError::Data(_) => 2,
            EvalError::Train(TrainError::Config(_)) => 1,
            EvalError::Train(inner) => match inner {
                TrainError::Nn(_) | TrainError::Ot(_) | TrainError::Reg(_) => 3,
                _ => 2,
            },
            _ => 3,
        };
    }
    if err.downcast_ref::<OtError>().is_some() {
        return 3;
    }
    2
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are successful displays; everything
            // else is a usage error and exits 1.
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Synth(args) => commands::synth(&args),
        Command::Train(args) => commands::train(&args),
        Command::Eval(args) => commands::eval(&args),
        Command::Ablate(args) => commands::ablate(&args),
        Command::ExportPlan(args) => commands::export_plan(&args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code_for(&err));
    }
}
