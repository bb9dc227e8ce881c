use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn geega(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geega"))
        .args(args)
        .current_dir(cwd)
        .env_remove("GEEGA_LOG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = geega(args, cwd);
    assert!(
        out.status.success(),
        "geega {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn files(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    v.sort();
    v
}

#[test]
fn synth_default_writes_eight_recordings_deterministically() {
    let t = TempDir::new().unwrap();
    ok(&["synth", "--out", "a", "--seed", "3"], t.path());
    ok(&["synth", "--out", "b", "--seed", "3"], t.path());
    let a = files(&t.path().join("a"), "geeg");
    let b = files(&t.path().join("b"), "geeg");
    assert_eq!(a.len(), 8);
    let names: Vec<String> = a.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert!(names.contains(&"S04_class1.geeg".to_string()));
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
    let m = manifest(&t.path().join("a"));
    assert_eq!(m["status"], "ok");
    assert_eq!(m["seed"], 3);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 8);
    assert_eq!(m["config"]["synth.subjects"], "4");
}

#[test]
fn invalid_config_key_is_named() {
    let t = TempDir::new().unwrap();
    fs::write(t.path().join("c.txt"), "synth.subjects=2\ngcn.colour=blue\n").unwrap();
    let out = geega(&["synth", "--config", "c.txt", "--out", "o"], t.path());
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.starts_with("geega: error:"), "{err}");
    assert!(err.contains("gcn.colour"), "{err}");
}

#[test]
fn featgen_counts_windows_and_records_no_notch() {
    let t = TempDir::new().unwrap();
    fs::write(
        t.path().join("c.txt"),
        "synth.subjects=1\nsynth.duration_seconds=35\n",
    )
    .unwrap();
    ok(&["synth", "--config", "c.txt", "--out", "data"], t.path());
    fs::remove_file(t.path().join("data/S01_class1.geeg")).unwrap();
    ok(&["featgen", "--input", "data", "--out", "feat", "--no-notch"], t.path());
    let set = geega::features::FeatureSet::read(&t.path().join("feat/features.gfc")).unwrap();
    // 35 s in 10 s windows
    assert_eq!(set.len(), 3);
    assert_eq!(set.topo[0].len(), 5 * 32 * 32);
    assert_eq!(set.spectro[0].len(), 4 * 32 * 32);
    let m = manifest(&t.path().join("feat"));
    assert_eq!(m["flags"][0], "--no-notch");
    assert_eq!(m["config"]["filter.notch_hz"], "none");
    assert_eq!(m["inputs"].as_array().unwrap().len(), 1);
}

#[test]
fn featgen_on_empty_directory_fails() {
    let t = TempDir::new().unwrap();
    fs::create_dir(t.path().join("empty")).unwrap();
    let out = geega(&["featgen", "--input", "empty", "--out", "feat"], t.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("no .geeg or .csv recordings"));
    assert_eq!(manifest(&t.path().join("feat"))["status"], "error");
}

#[test]
fn featgen_names_a_bad_file() {
    let t = TempDir::new().unwrap();
    fs::create_dir(t.path().join("data")).unwrap();
    fs::write(t.path().join("data/broken.geeg"), b"GEEG\x01").unwrap();
    let out = geega(&["featgen", "--input", "data", "--out", "feat"], t.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("broken.geeg"), "{}", stderr(&out));
}

#[test]
fn missing_inputs_are_descriptive() {
    let t = TempDir::new().unwrap();
    let out = geega(&["train", "--features", "none.gfc", "--out", "run"], t.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("cannot load feature cache none.gfc"));
    let out = geega(&["eval", "--checkpoint", "none.ckpt", "--features", "x", "--out", "ev"], t.path());
    assert!(stderr(&out).contains("cannot load checkpoint none.ckpt"));
}

#[test]
fn diagnose_on_empty_log_fails() {
    let t = TempDir::new().unwrap();
    fs::write(t.path().join("log.csv"), "epoch,batch,pair,cosine,conflict\n").unwrap();
    let out = geega(&["diagnose", "--log", "log.csv", "--out", "d"], t.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("geega: error:"));
    assert!(stderr(&out).contains("conflict log is empty"));
}

#[test]
fn ablated_training_is_labelled_and_diagnosable() {
    let t = TempDir::new().unwrap();
    fs::write(
        t.path().join("c.txt"),
        "preset=tiny\nsynth.subjects=2\nsynth.duration_seconds=30\ntrain.epochs=3\n",
    )
    .unwrap();
    ok(&["synth", "--config", "c.txt", "--out", "data"], t.path());
    ok(&["featgen", "--config", "c.txt", "--input", "data", "--out", "feat"], t.path());
    ok(
        &[
            "train", "--config", "c.txt", "--features", "feat/features.gfc", "--out", "run", "--ablate", "git",
            "--ablate", "align",
        ],
        t.path(),
    );
    let run = t.path().join("run");
    let lines: Vec<serde_json::Value> = fs::read_to_string(run.join("metrics.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    // 2 folds x 3 epochs, then the summary
    assert_eq!(lines.len(), 7);
    let summary = lines.last().unwrap();
    assert_eq!(summary["record"], "summary");
    assert_eq!(summary["ablation"], "no-git+no-align");
    assert_eq!(lines[0]["train_loss"]["terms"].as_array().unwrap().len(), 3);
    let mean = summary["accuracy"]["mean"].as_f64().unwrap();
    let folds: Vec<f64> = summary["folds"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["scores"]["accuracy"].as_f64().unwrap())
        .collect();
    assert!((mean - folds.iter().sum::<f64>() / 2.0).abs() < 1e-12);
    assert_eq!(manifest(&run)["flags"], serde_json::json!(["--ablate=git", "--ablate=align"]));
    for f in ["fold0.ckpt", "fold1.ckpt", "fold0_conflicts.csv", "conflict_heatmap.csv"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let d = geega(&["diagnose", "--log", "run", "--out", "diag"], t.path());
    assert!(d.status.success());
    assert_eq!(
        fs::read(t.path().join("diag/conflict_heatmap.csv")).unwrap(),
        fs::read(run.join("conflict_heatmap.csv")).unwrap()
    );
}
