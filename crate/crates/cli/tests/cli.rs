use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clap::CommandFactory;
use pdmnet_cli::{Cli, EXIT_DATA, EXIT_OK, EXIT_USAGE};

const TINY: &str = r#"
channels = 1

[synth]
num_samples = 40
num_landmarks = 16
mode_amplitudes = [3.0, 3.0, 2.0, 2.0, 1.0, 1.0]
image_size = 64
radius = 16.0
max_translation = 3.0
test_fraction = 0.2

[crop]
out_size = 64

[train]
epochs = 1
batch_size = 8
num_shape_params = 4
plan = "compact"

[benchmark]
batch_size = 2
iterations = 2
warmup = 0
"#;

fn pdmnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdmnet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let config = dir.join("tiny.toml");
    if !config.exists() {
        fs::write(&config, TINY).unwrap();
    }
    let mut full = vec!["--config", config.to_str().unwrap(), "--out", dir.to_str().unwrap()];
    full.extend_from_slice(args);
    pdmnet(&full)
}

fn ok(out: Output) -> Output {
    assert_eq!(out.status.code(), Some(EXIT_OK), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn prepared(args: &[&str]) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(run_in(dir.path(), &[&["synth"], args].concat()));
    ok(run_in(dir.path(), &["build-shapes"]));
    dir
}

fn leftover_staging(dir: &Path) -> Vec<PathBuf> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with('.'))
        .collect()
}

#[test]
fn every_flag_has_help_text() {
    let mut root = Cli::command();
    root.build();
    let mut missing = Vec::new();
    for cmd in std::iter::once(&root).chain(root.get_subcommands()) {
        for arg in cmd.get_arguments() {
            let id = arg.get_id().as_str();
            if id != "help" && id != "version" && arg.get_help().is_none() {
                missing.push(format!("{} --{id}", cmd.get_name()));
            }
        }
    }
    assert!(missing.is_empty(), "flags without help: {missing:?}");
    assert_eq!(root.get_subcommands().filter(|c| c.get_name() != "help").count(), 7);
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(pdmnet(&["train", "--no-such-flag"]).status.code(), Some(EXIT_USAGE));
    assert_eq!(pdmnet(&["fly"]).status.code(), Some(EXIT_USAGE));
    assert_eq!(pdmnet(&["sweep", "--params", "5,x"]).status.code(), Some(EXIT_USAGE));
    assert_eq!(pdmnet(&["--help"]).status.code(), Some(EXIT_OK));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "sede = 3\n").unwrap();
    let out = pdmnet(&["synth", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
}

#[test]
fn missing_inputs_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["build-shapes"]);
    assert_eq!(out.status.code(), Some(EXIT_DATA));
    assert!(leftover_staging(dir.path()).is_empty());
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = prepared(&[]);
    let d = dir.path();
    ok(run_in(d, &["train"]));
    ok(run_in(d, &["evaluate"]));
    ok(run_in(d, &["predict"]));
    ok(run_in(d, &["benchmark"]));
    for name in [
        "manifest.txt",
        "landmarks.csv",
        "generator.json",
        "true_shape_model.json",
        "shape_model.json",
        "best.json",
        "last.json",
        "train_log.jsonl",
        "train_summary.json",
        "eval.json",
        "per_image.csv",
        "error_histogram.csv",
        "predictions.csv",
        "predictions_original.csv",
        "parameters.csv",
        "benchmark.json",
        "synth.run.json",
        "train.run.json",
        "evaluate.run.json",
    ] {
        assert!(d.join(name).is_file(), "{name} missing");
    }
    assert_eq!(fs::read_dir(d.join("images")).unwrap().count(), 40);
    let eval: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("eval.json")).unwrap()).unwrap();
    assert_eq!(eval["num_images"], 8);
    assert_eq!(fs::read_to_string(d.join("predictions.csv")).unwrap().lines().count(), 9);
    let header = fs::read_to_string(d.join("parameters.csv")).unwrap();
    assert!(header.starts_with("id,w0,w1,w2,w3,scale,theta,tx,ty\n"));
    assert!(leftover_staging(d).is_empty());
}

#[test]
fn sweep_writes_one_row_per_parameter_count() {
    let dir = prepared(&[]);
    ok(run_in(dir.path(), &["sweep", "--params", "5,15,25"]));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3, "{csv}");
    for (row, p) in rows.iter().zip(["5", "15", "25"]) {
        assert!(row.starts_with(&format!("{p},")) && row.ends_with(",ok"), "{row}");
    }
    assert_eq!(fs::read_to_string(dir.path().join("sweep_curve.csv")).unwrap().lines().count(), 4);
}

#[test]
fn mismatched_shape_model_is_rejected() {
    let dir = prepared(&[]);
    let d = dir.path();
    ok(run_in(d, &["train"]));
    let other = d.join("true_shape_model.json");
    let out = run_in(d, &["evaluate", "--shape-model", other.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_DATA));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fingerprint mismatch"));
    assert!(!d.join("eval.json").exists());
}

#[test]
fn failed_run_leaves_earlier_outputs_alone() {
    let dir = prepared(&[]);
    let d = dir.path();
    ok(run_in(d, &["train"]));
    ok(run_in(d, &["evaluate"]));
    let before: Vec<Vec<u8>> = ["eval.json", "evaluate.run.json"].iter().map(|n| fs::read(d.join(n)).unwrap()).collect();
    let broken = d.join("broken.json");
    fs::write(&broken, "{\"format\": \"pdmnet-checkpoint\"").unwrap();
    let out = run_in(d, &["evaluate", "--checkpoint", broken.to_str().unwrap(), "--bins", "3"]);
    assert_ne!(out.status.code(), Some(EXIT_OK));
    let after: Vec<Vec<u8>> = ["eval.json", "evaluate.run.json"].iter().map(|n| fs::read(d.join(n)).unwrap()).collect();
    assert_eq!(before, after);
    assert!(leftover_staging(d).is_empty());
}

#[test]
fn runs_are_idempotent_for_a_fixed_seed() {
    let a = prepared(&["--seed", "9"]);
    let b = prepared(&["--seed", "9"]);
    for dir in [&a, &b] {
        ok(run_in(dir.path(), &["train", "--seed", "9"]));
        ok(run_in(dir.path(), &["predict", "--seed", "9"]));
    }
    for name in ["landmarks.csv", "manifest.txt", "generator.json", "shape_model.json", "best.json", "train_log.jsonl", "predictions.csv"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name} differs");
    }
    assert_eq!(fs::read(a.path().join("images/synth000000.png")).unwrap(), fs::read(b.path().join("images/synth000000.png")).unwrap());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.toml"), format!("seed = 3\n{TINY}")).unwrap();
    ok(run_in(dir.path(), &["synth", "--seed", "5", "--num-samples", "12"]));
    let snap: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("synth.run.json")).unwrap()).unwrap();
    assert_eq!(snap["seed"], 5);
    assert_eq!(snap["config"]["synth"]["seed"], 5);
    assert_eq!(snap["config"]["synth"]["num_samples"], 12);
    assert_eq!(snap["config"]["synth"]["image_size"], 64);
    assert_eq!(snap["config"]["train"]["epochs"], 1);
    assert_eq!(fs::read_dir(dir.path().join("images")).unwrap().count(), 12);
}
