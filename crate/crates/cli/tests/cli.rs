//! End-to-end tests of the `hotmv` binary: artifact layout, byte-level
//! reproducibility, config precedence, and exit-code contracts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use ndarray::Array2;
use tempfile::TempDir;

use hotmv_core::data::{write_dataset, MultiViewDataset};
use hotmv_core::eval::read_plan_heatmap;
use hotmv_core::ot::TransportPlan;

fn hotmv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hotmv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed: status {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn path_str(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

fn read_bytes(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

/// Generates a small dataset and returns its directory.
fn small_dataset(root: &Path, samples: usize, seed: u64) -> PathBuf {
    let dir = root.join(format!("ds_{seed}"));
    let out = hotmv(&[
        "synth",
        "--out",
        path_str(&dir),
        "--samples",
        &samples.to_string(),
        "--seed",
        &seed.to_string(),
    ]);
    assert_ok(&out);
    dir
}

fn train_args<'a>(data: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "train",
        "--data",
        data,
        "--out",
        out,
        "--epochs",
        "3",
        "--batch-size",
        "50",
        "--seed",
        "11",
    ]
}

#[test]
fn synth_writes_identical_datasets_for_equal_seeds() {
    let tmp = TempDir::new().unwrap();
    let a = small_dataset(tmp.path(), 240, 3);
    let b_dir = tmp.path().join("b");
    let out = hotmv(&[
        "synth",
        "--out",
        path_str(&b_dir),
        "--samples",
        "240",
        "--seed",
        "3",
    ]);
    assert_ok(&out);

    for file in [
        "manifest.json",
        "labels.csv",
        "planted.json",
        "view0.csv",
        "view5.csv",
    ] {
        assert_eq!(
            read_bytes(&a.join(file)),
            read_bytes(&b_dir.join(file)),
            "{file} differs between identical synth runs"
        );
    }

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["seed"], 3);
    for (_, path) in manifest["artifacts"].as_object().unwrap() {
        assert!(Path::new(path.as_str().unwrap()).exists());
    }
}

#[test]
fn synth_accepts_partial_spec_files_and_flag_overrides() {
    let tmp = TempDir::new().unwrap();
    let spec_path = tmp.path().join("spec.toml");
    fs::write(&spec_path, "samples = 999\nnoise_sigma = 0.5\n").unwrap();
    let dir = tmp.path().join("ds");
    let out = hotmv(&[
        "synth",
        "--out",
        path_str(&dir),
        "--spec",
        path_str(&spec_path),
        "--samples",
        "150",
        "--noise",
        "0",
    ]);
    assert_ok(&out);

    // Flag beat the spec file; remaining fields kept generator defaults.
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["synth"]["samples"], 150);
    assert_eq!(manifest["synth"]["noise_sigma"], 0.0);
    assert_eq!(manifest["synth"]["views"], 6);

    let planted: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("planted.json")).unwrap()).unwrap();
    assert_eq!(planted["assignments"], serde_json::json!([0, 0, 1, 1, 2, 2]));

    // Unknown spec keys are rejected as a usage error.
    fs::write(&spec_path, "samples = 10\nbogus_key = 1\n").unwrap();
    let out = hotmv(&[
        "synth",
        "--out",
        path_str(&tmp.path().join("ds2")),
        "--spec",
        path_str(&spec_path),
    ]);
    assert_exit(&out, 1);
}

#[test]
fn train_reruns_reproduce_artifacts_byte_for_byte() {
    let tmp = TempDir::new().unwrap();
    let data = small_dataset(tmp.path(), 300, 7);
    let run_a = tmp.path().join("run_a");
    let run_b = tmp.path().join("run_b");
    assert_ok(&hotmv(&train_args(path_str(&data), path_str(&run_a))));
    assert_ok(&hotmv(&train_args(path_str(&data), path_str(&run_b))));

    for file in ["checkpoint.bin", "report.jsonl", "plan.json"] {
        assert_eq!(
            read_bytes(&run_a.join(file)),
            read_bytes(&run_b.join(file)),
            "{file} differs between identical train runs"
        );
    }
}

#[test]
fn train_smoke_on_synthetic_defaults_is_fast() {
    let tmp = TempDir::new().unwrap();
    let data_dir = tmp.path().join("full");
    assert_ok(&hotmv(&["synth", "--out", path_str(&data_dir)]));
    let out_dir = tmp.path().join("run");

    let start = Instant::now();
    let out = hotmv(&[
        "train",
        "--data",
        path_str(&data_dir),
        "--out",
        path_str(&out_dir),
        "--epochs",
        "2",
    ]);
    assert_ok(&out);
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "2-epoch smoke run took {elapsed:.1}s");

    for file in ["checkpoint.bin", "report.jsonl", "plan.json", "run_manifest.json"] {
        assert!(out_dir.join(file).exists(), "{file} missing");
    }
    let report = fs::read_to_string(out_dir.join("report.jsonl")).unwrap();
    assert_eq!(report.lines().count(), 2);
}

#[test]
fn semisupervised_training_without_labels_exits_2_with_clear_message() {
    let tmp = TempDir::new().unwrap();
    let views = vec![
        Array2::from_shape_fn((40, 3), |(i, j)| (i * 3 + j) as f64),
        Array2::from_shape_fn((40, 4), |(i, j)| (i * 4 + j) as f64 * 0.5),
    ];
    let dataset = MultiViewDataset::from_parts(
        views,
        vec!["a".into(), "b".into()],
        None,
        None,
        true,
        None,
        "unlabeled fixture".into(),
    )
    .unwrap();
    let dir = tmp.path().join("unlabeled");
    write_dataset(&dataset, &dir, "unlabeled", false).unwrap();

    let out = hotmv(&[
        "train",
        "--data",
        path_str(&dir),
        "--out",
        path_str(&tmp.path().join("run")),
        "--epochs",
        "1",
    ]);
    assert_exit(&out, 2);
    let stderr = String::from_utf8_lossy(&out.stderr).to_lowercase();
    assert!(stderr.contains("label"), "stderr was: {stderr}");
}

#[test]
fn eval_scores_the_held_out_split_deterministically() {
    let tmp = TempDir::new().unwrap();
    let data = small_dataset(tmp.path(), 300, 7);
    let run = tmp.path().join("run");
    assert_ok(&hotmv(&train_args(path_str(&data), path_str(&run))));

    let checkpoint = run.join("checkpoint.bin");
    let eval_a = tmp.path().join("eval_a");
    let eval_b = tmp.path().join("eval_b");
    for out_dir in [&eval_a, &eval_b] {
        let out = hotmv(&[
            "eval",
            "--checkpoint",
            path_str(&checkpoint),
            "--data",
            path_str(&data),
            "--out",
            path_str(out_dir),
            "--seed",
            "11",
        ]);
        assert_ok(&out);
        let printed = String::from_utf8_lossy(&out.stdout);
        let on_disk = fs::read_to_string(out_dir.join("accuracy.json")).unwrap();
        assert_eq!(printed, on_disk);
    }
    assert_eq!(
        read_bytes(&eval_a.join("accuracy.json")),
        read_bytes(&eval_b.join("accuracy.json"))
    );

    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval_a.join("accuracy.json")).unwrap()).unwrap();
    assert_eq!(record["split"], "test");
    // 300 samples, stratified 20% test.
    assert_eq!(record["samples"], 60);
    let acc = record["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn eval_names_the_view_on_feature_width_mismatch() {
    let tmp = TempDir::new().unwrap();
    let data = small_dataset(tmp.path(), 300, 7);
    let run = tmp.path().join("run");
    assert_ok(&hotmv(&train_args(path_str(&data), path_str(&run))));

    // Same layout, narrower features.
    let spec_path = tmp.path().join("narrow.toml");
    fs::write(
        &spec_path,
        "samples = 120\nview_dims = [12, 12, 12, 12, 12, 12]\n",
    )
    .unwrap();
    let narrow = tmp.path().join("narrow");
    assert_ok(&hotmv(&[
        "synth",
        "--out",
        path_str(&narrow),
        "--spec",
        path_str(&spec_path),
    ]));

    let out = hotmv(&[
        "eval",
        "--checkpoint",
        path_str(&run.join("checkpoint.bin")),
        "--data",
        path_str(&narrow),
        "--out",
        path_str(&tmp.path().join("eval")),
        "--seed",
        "11",
    ]);
    assert_exit(&out, 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("view0") && stderr.contains("12") && stderr.contains("16"),
        "stderr was: {stderr}"
    );
}

#[test]
fn export_plan_round_trips_the_saved_plan() {
    let tmp = TempDir::new().unwrap();
    let data = small_dataset(tmp.path(), 300, 7);
    let run = tmp.path().join("run");
    assert_ok(&hotmv(&train_args(path_str(&data), path_str(&run))));

    let plan_path = run.join("plan.json");
    let export = tmp.path().join("export");
    assert_ok(&hotmv(&[
        "export-plan",
        "--plan",
        path_str(&plan_path),
        "--data",
        path_str(&data),
        "--out",
        path_str(&export),
    ]));

    let plan = TransportPlan::from_json_str(&fs::read_to_string(&plan_path).unwrap()).unwrap();
    let heatmap = read_plan_heatmap(&export.join("heatmap.csv")).unwrap();
    assert_eq!(heatmap.row_names, vec!["view0", "view1", "view2", "view3", "view4", "view5"]);
    assert_eq!(heatmap.weights.dim(), plan.weights.dim());
    for (a, b) in heatmap.weights.iter().zip(plan.weights.iter()) {
        assert!((a - b).abs() <= 1e-12);
    }
    assert!(export.join("heatmap.json").exists());
}

#[test]
fn ablate_writes_one_row_per_variant() {
    let tmp = TempDir::new().unwrap();
    let data = small_dataset(tmp.path(), 240, 9);
    let out_dir = tmp.path().join("ablation");
    let out = hotmv(&[
        "ablate",
        "--data",
        path_str(&data),
        "--out",
        path_str(&out_dir),
        "--trials",
        "1",
        "--epochs",
        "2",
        "--batch-size",
        "40",
    ]);
    assert_ok(&out);

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("ablation.json")).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 7, "baseline plus one row per removed view");
    assert_eq!(rows[0]["label"], "All");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("most damaging removal"));
}

#[test]
fn print_config_applies_precedence_and_skips_work() {
    let tmp = TempDir::new().unwrap();
    let config_path = tmp.path().join("cfg.toml");
    fs::write(&config_path, "epochs = 7\ngamma = 0.5\n").unwrap();
    let out = hotmv(&[
        "train",
        "--config",
        path_str(&config_path),
        "--epochs",
        "9",
        "--print-config",
    ]);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("epochs = 9"), "flag beats file: {stdout}");
    assert!(stdout.contains("gamma = 0.5"), "file beats default: {stdout}");
    assert!(stdout.contains("lr = 0.001"), "default survives: {stdout}");
    assert!(tmp.path().read_dir().unwrap().count() == 1, "no artifacts written");
}

#[test]
fn usage_errors_exit_1() {
    // Unknown flag.
    assert_exit(&hotmv(&["train", "--no-such-flag"]), 1);
    // Unknown regularizer name.
    assert_exit(&hotmv(&["train", "--regularizer", "bogus"]), 1);
    // Config file with an unknown key.
    let tmp = TempDir::new().unwrap();
    let config_path = tmp.path().join("cfg.toml");
    fs::write(&config_path, "learning_rate = 0.1\n").unwrap();
    let out = hotmv(&[
        "train",
        "--config",
        path_str(&config_path),
        "--print-config",
    ]);
    assert_exit(&out, 1);
    // Missing --data without --print-config.
    assert_exit(&hotmv(&["train", "--out", "/tmp/nowhere"]), 1);
    // Invalid config value.
    assert_exit(&hotmv(&["train", "--lr", "-1", "--print-config"]), 1);
}

#[test]
fn missing_dataset_exits_2() {
    let tmp = TempDir::new().unwrap();
    let out = hotmv(&[
        "train",
        "--data",
        path_str(&tmp.path().join("nope")),
        "--out",
        path_str(&tmp.path().join("run")),
    ]);
    assert_exit(&out, 2);
}

#[test]
fn output_overwrite_needs_force() {
    let tmp = TempDir::new().unwrap();
    let data = small_dataset(tmp.path(), 240, 5);
    let run = tmp.path().join("run");
    assert_ok(&hotmv(&train_args(path_str(&data), path_str(&run))));

    let again = hotmv(&train_args(path_str(&data), path_str(&run)));
    assert_exit(&again, 2);

    let mut forced = train_args(path_str(&data), path_str(&run));
    forced.push("--force");
    assert_ok(&hotmv(&forced));
}

#[test]
fn unsupervised_mode_trains_without_a_classifier() {
    let tmp = TempDir::new().unwrap();
    let data = small_dataset(tmp.path(), 300, 2);
    let run = tmp.path().join("unsup");
    let out = hotmv(&[
        "train",
        "--data",
        path_str(&data),
        "--out",
        path_str(&run),
        "--mode",
        "unsupervised",
        "--epochs",
        "3",
        "--batch-size",
        "50",
    ]);
    assert_ok(&out);

    // Scoring a classifier-free checkpoint is a data error, not a crash.
    let eval_out = hotmv(&[
        "eval",
        "--checkpoint",
        path_str(&run.join("checkpoint.bin")),
        "--data",
        path_str(&data),
        "--out",
        path_str(&tmp.path().join("eval")),
    ]);
    assert_exit(&eval_out, 2);
}
