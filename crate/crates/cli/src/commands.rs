//! Implementations of the five subcommands. Each run resolves its inputs,
//! does the work, writes its artifacts plus exactly one `run_manifest.json`,
//! and prints a short summary to stdout.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use ndarray::Array2;

use hotmv_core::data::{
    generate_synthetic, load_manifest, split_and_unalign, write_dataset, MultiViewDataset,
    SplitSpec, SynthSpec,
};
use hotmv_core::eval::{accuracy, export_plan_heatmap, run_ablation};
use hotmv_core::ot::TransportPlan;
use hotmv_core::train::{
    train_semisupervised, train_unsupervised, TrainConfig, TrainReport, TrainedModel,
};

use crate::manifest::RunManifest;
use crate::{AblateArgs, CliError, ConfigOverrides, EvalArgs, EvalSplit, ExportPlanArgs, Mode, SynthArgs, TrainArgs};

/// Refuses to clobber a previous run unless `--force`, then creates the
/// directory and returns the run-manifest path inside it.
fn prepare_out_dir(out: &Path, force: bool) -> anyhow::Result<PathBuf> {
    let manifest_path = out.join("run_manifest.json");
    if manifest_path.exists() && !force {
        return Err(CliError::Data(format!(
            "{} already holds a run manifest; pass --force to overwrite",
            out.display()
        ))
        .into());
    }
    fs::create_dir_all(out)
        .map_err(|e| CliError::Data(format!("creating {}: {e}", out.display())))?;
    Ok(manifest_path)
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text)
        .map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

fn load_dataset(dir: &Path) -> anyhow::Result<MultiViewDataset> {
    let manifest = dir.join("manifest.json");
    Ok(load_manifest(&manifest)?)
}

/// Flags beat the config file, which beats the built-in defaults.
fn resolve_config(ov: &ConfigOverrides) -> anyhow::Result<TrainConfig> {
    let mut cfg = match &ov.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("reading config {}: {e}", path.display())))?;
            TrainConfig::from_toml_str(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?
        }
        None => TrainConfig::default(),
    };
    if let Some(seed) = ov.seed {
        cfg.seed = seed;
    }
    if let Some(kind) = ov.regularizer {
        cfg.regularizer = kind;
    }
    if let Some(epochs) = ov.epochs {
        cfg.epochs = epochs;
    }
    if let Some(batch) = ov.batch_size {
        cfg.batch_size = batch;
    }
    if let Some(lr) = ov.lr {
        cfg.lr = lr;
    }
    if let Some(gamma) = ov.gamma {
        cfg.gamma = gamma;
    }
    if let Some(tau) = ov.tau {
        cfg.tau = tau;
    }
    if let Some(alpha) = ov.alpha {
        cfg.alpha = alpha;
    }
    if let Some(beta) = ov.beta {
        cfg.beta = beta;
    }
    if let Some(k) = ov.num_clusters {
        cfg.num_clusters = k;
    }
    if let Some(ae) = ov.use_autoencoder {
        cfg.use_autoencoder = ae;
    }
    cfg.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

/// One d×N matrix per view covering the whole dataset, in view order.
fn full_view_batches(dataset: &MultiViewDataset) -> Vec<Array2<f64>> {
    let indices: Vec<usize> = (0..dataset.num_samples()).collect();
    (0..dataset.num_views())
        .map(|view| dataset.batch(view, &indices))
        .collect()
}

pub fn synth(args: &SynthArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let mut spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("reading spec {}: {e}", path.display())))?;
            toml::from_str::<SynthSpec>(&text)
                .map_err(|e| CliError::Usage(format!("spec {}: {e}", path.display())))?
        }
        None => SynthSpec::default(),
    };
    if let Some(samples) = args.samples {
        spec.samples = samples;
    }
    if let Some(noise) = args.noise {
        spec.noise_sigma = noise;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }

    let dataset = generate_synthetic(&spec)
        .map_err(|e| CliError::Usage(format!("invalid generator settings: {e}")))?;
    let dataset_manifest = write_dataset(&dataset, &args.out, &args.name, args.force)?;
    let run_manifest_path = args.out.join("run_manifest.json");

    let mut manifest = RunManifest::new("synth", spec.seed);
    manifest.dataset = Some(dataset.provenance().to_string());
    manifest.synth = Some(spec);
    manifest.artifact("dataset_manifest", &dataset_manifest);
    manifest.artifact("run_manifest", &run_manifest_path);
    manifest.wall_clock_secs = start.elapsed().as_secs_f64();
    write_text(&run_manifest_path, &manifest.to_json_string()?)?;

    println!(
        "wrote {} ({} views, {} samples)",
        dataset_manifest.display(),
        dataset.num_views(),
        dataset.num_samples()
    );
    Ok(())
}

fn train_split_spec(cfg: &TrainConfig, labeled_fraction: f64) -> SplitSpec {
    SplitSpec {
        labeled_aligned_fraction: labeled_fraction,
        unalign: !cfg.regularizer.requires_alignment(),
        seed: cfg.seed,
        ..SplitSpec::default()
    }
}

pub fn train(args: &TrainArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let cfg = resolve_config(&args.overrides)?;
    if args.print_config {
        print!("{}", cfg.to_toml_string());
        return Ok(());
    }
    let data_dir = args
        .data
        .as_ref()
        .ok_or_else(|| CliError::Usage("--data is required (unless --print-config)".into()))?;
    let out_dir = args
        .out
        .as_ref()
        .ok_or_else(|| CliError::Usage("--out is required (unless --print-config)".into()))?;

    let dataset = load_dataset(data_dir)?;
    let run_manifest_path = prepare_out_dir(out_dir, args.force)?;

    let (model, report, split_spec): (TrainedModel, TrainReport, Option<SplitSpec>) =
        match args.mode {
            Mode::Semisupervised => {
                let spec = train_split_spec(&cfg, args.labeled_fraction);
                let split = split_and_unalign(&dataset, &spec)?;
                let (model, report) = train_semisupervised(&split, &cfg)?;
                (model, report, Some(spec))
            }
            Mode::Unsupervised => {
                if dataset.labels().is_some() {
                    // Labeled source: reserve the validation pool for
                    // checkpoint selection and train on the unlabeled pool.
                    let spec = train_split_spec(&cfg, args.labeled_fraction);
                    let split = split_and_unalign(&dataset, &spec)?;
                    let (model, report) =
                        train_unsupervised(&split.train_unlabeled, Some(&split.valid), &cfg)?;
                    (model, report, Some(spec))
                } else {
                    let (model, report) = train_unsupervised(&dataset, None, &cfg)?;
                    (model, report, None)
                }
            }
        };

    let checkpoint_path = out_dir.join("checkpoint.bin");
    model.save_to_path(&checkpoint_path)?;
    let report_path = out_dir.join("report.jsonl");
    write_text(&report_path, &report.to_jsonl())?;

    let mut manifest = RunManifest::new("train", cfg.seed);
    manifest.mode = Some(
        match args.mode {
            Mode::Unsupervised => "unsupervised",
            Mode::Semisupervised => "semisupervised",
        }
        .to_string(),
    );
    manifest.dataset = Some(dataset.provenance().to_string());
    manifest.config = Some(cfg.clone());
    manifest.split = split_spec;
    manifest.input("data", data_dir);
    manifest.artifact("checkpoint", &checkpoint_path);
    manifest.artifact("report", &report_path);

    if let Some(plan) = &report.final_plan {
        let plan_path = out_dir.join("plan.json");
        write_text(&plan_path, &plan.to_json_string()?)?;
        manifest.artifact("plan", &plan_path);
    }
    manifest.artifact("run_manifest", &run_manifest_path);
    manifest.wall_clock_secs = start.elapsed().as_secs_f64();
    write_text(&run_manifest_path, &manifest.to_json_string()?)?;

    if let Some(last) = report.records.last() {
        let mut line = format!("epoch {}: coupling {:.6}", last.epoch, last.coupling);
        if let Some(task) = last.task {
            line.push_str(&format!(", task {task:.6}"));
        }
        if let Some(valid) = last.valid {
            line.push_str(&format!(", valid {valid:.6}"));
        }
        println!("{line}");
    }
    if let Some(epoch) = report.selected_epoch {
        println!("restored best checkpoint from epoch {epoch}");
    }
    println!("wrote {}", run_manifest_path.display());
    Ok(())
}

/// Accuracy record printed to stdout and saved as `accuracy.json`.
#[derive(serde::Serialize, serde::Deserialize)]
struct AccuracyRecord {
    split: String,
    samples: usize,
    accuracy: f64,
}

pub fn eval(args: &EvalArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let model = TrainedModel::load_from_path(&args.checkpoint)
        .map_err(|e| CliError::Data(format!("checkpoint {}: {e}", args.checkpoint.display())))?;
    let dataset = load_dataset(&args.data)?;

    // Fail early, naming the offending view, when the checkpoint and the
    // dataset disagree about feature widths.
    let expected = model.encoders.view_dims();
    if expected.len() != dataset.num_views() {
        return Err(CliError::Data(format!(
            "checkpoint encodes {} views but dataset `{}` has {}",
            expected.len(),
            dataset.provenance(),
            dataset.num_views()
        ))
        .into());
    }
    for (view, &want) in expected.iter().enumerate() {
        let got = dataset.view_dim(view);
        if got != want {
            return Err(CliError::Data(format!(
                "view `{}` has {got} features but the checkpoint expects {want}",
                dataset.view_names()[view]
            ))
            .into());
        }
    }

    let (pool, split_spec): (MultiViewDataset, Option<SplitSpec>) = match args.split {
        EvalSplit::Full => (dataset.clone(), None),
        _ => {
            let spec = SplitSpec {
                labeled_aligned_fraction: args.labeled_fraction,
                // Pool membership is decided before unalignment, so scoring
                // skips the permutation work; the scored pools stay aligned.
                unalign: false,
                seed: args.seed,
                ..SplitSpec::default()
            };
            let split = split_and_unalign(&dataset, &spec)?;
            let pool = match args.split {
                EvalSplit::TrainLabeled => split.train_labeled,
                EvalSplit::Valid => split.valid,
                EvalSplit::Test => split.test,
                EvalSplit::Full => unreachable!(),
            };
            (pool, Some(spec))
        }
    };

    if pool.labels().is_none() {
        return Err(CliError::Data(format!(
            "split `{}` carries no labels to score against",
            args.split.label()
        ))
        .into());
    }

    let run_manifest_path = prepare_out_dir(&args.out, args.force)?;
    let batches = full_view_batches(&pool);
    let views: Vec<&Array2<f64>> = batches.iter().collect();
    let preds = model.predict(&views)?;
    let indices: Vec<usize> = (0..pool.num_samples()).collect();
    let truth = pool.labels_at(&indices)?;
    let acc = accuracy(&preds, &truth)?;

    let record = AccuracyRecord {
        split: args.split.label().to_string(),
        samples: truth.len(),
        accuracy: acc,
    };
    let mut json = serde_json::to_string_pretty(&record)?;
    json.push('\n');
    let accuracy_path = args.out.join("accuracy.json");
    write_text(&accuracy_path, &json)?;
    print!("{json}");

    let mut manifest = RunManifest::new("eval", args.seed);
    manifest.dataset = Some(dataset.provenance().to_string());
    manifest.split = split_spec;
    manifest.input("checkpoint", &args.checkpoint);
    manifest.input("data", &args.data);
    manifest.artifact("accuracy", &accuracy_path);
    manifest.artifact("run_manifest", &run_manifest_path);
    manifest.wall_clock_secs = start.elapsed().as_secs_f64();
    write_text(&run_manifest_path, &manifest.to_json_string()?)?;
    Ok(())
}

pub fn ablate(args: &AblateArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let cfg = resolve_config(&args.overrides)?;
    let dataset = load_dataset(&args.data)?;
    let run_manifest_path = prepare_out_dir(&args.out, args.force)?;

    let split_spec = train_split_spec(&cfg, args.labeled_fraction);
    let report = run_ablation(&dataset, &split_spec, &cfg, args.trials)?;

    let ablation_path = args.out.join("ablation.json");
    write_text(&ablation_path, &report.to_json_string())?;

    for row in &report.rows {
        println!(
            "{:<16} accuracy {:.4} ± {:.4}",
            row.label, row.mean_accuracy, row.std_accuracy
        );
    }
    if let Some(worst) = report.most_damaging() {
        println!("most damaging removal: {}", worst.label);
    }

    let mut manifest = RunManifest::new("ablate", cfg.seed);
    manifest.dataset = Some(dataset.provenance().to_string());
    manifest.config = Some(cfg);
    manifest.split = Some(split_spec);
    manifest.trials = Some(args.trials);
    manifest.input("data", &args.data);
    manifest.artifact("ablation", &ablation_path);
    manifest.artifact("run_manifest", &run_manifest_path);
    manifest.wall_clock_secs = start.elapsed().as_secs_f64();
    write_text(&run_manifest_path, &manifest.to_json_string()?)?;
    println!("wrote {}", ablation_path.display());
    Ok(())
}

pub fn export_plan(args: &ExportPlanArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let text = fs::read_to_string(&args.plan)
        .map_err(|e| CliError::Data(format!("reading plan {}: {e}", args.plan.display())))?;
    let plan = TransportPlan::from_json_str(&text)
        .map_err(|e| CliError::Data(format!("plan {}: {e}", args.plan.display())))?;

    let mut manifest = RunManifest::new("export-plan", 0);
    let row_names: Vec<String> = match &args.data {
        Some(dir) => {
            let dataset = load_dataset(dir)?;
            if dataset.num_views() != plan.rows() {
                return Err(CliError::Data(format!(
                    "plan has {} rows but dataset `{}` has {} views",
                    plan.rows(),
                    dataset.provenance(),
                    dataset.num_views()
                ))
                .into());
            }
            manifest.dataset = Some(dataset.provenance().to_string());
            manifest.input("data", dir);
            dataset.view_names().to_vec()
        }
        None => (0..plan.rows()).map(|i| format!("view_{i}")).collect(),
    };

    let run_manifest_path = prepare_out_dir(&args.out, args.force)?;
    let csv_path = args.out.join("heatmap.csv");
    let sidecar = export_plan_heatmap(&plan, &row_names, &csv_path)
        .context("exporting plan heatmap")?;

    manifest.input("plan", &args.plan);
    manifest.artifact("heatmap_csv", &csv_path);
    manifest.artifact("heatmap_json", &sidecar);
    manifest.artifact("run_manifest", &run_manifest_path);
    manifest.wall_clock_secs = start.elapsed().as_secs_f64();
    write_text(&run_manifest_path, &manifest.to_json_string()?)?;
    println!("wrote {}", csv_path.display());
    Ok(())
}
