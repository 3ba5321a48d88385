//! End-to-end tests of the command-line binary.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wlf"))
}

fn write_config(dir: &Path, iterations: u32) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        format!(
            r#"{{
  "problem": {{"kinetic": {{"kind": "w2"}}}},
  "field": {{"input_dim": 2, "hidden_widths": [12, 12]}},
  "path": {{"dim": 2, "hidden_widths": [12]}},
  "train": {{"iterations": {iterations}, "batch_size": 32, "eval_every": 25}},
  "dataset": {{"source": "synth", "kind": "gaussian_shift", "a": [3.0, 0.0], "seed": 1, "n": 128}}
}}"#
        ),
    )
    .unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn train_completes_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 50);
    let run = dir.path().join("run");
    let out = bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&run)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "checkpoint_field.wlf",
        "checkpoint_path.wlf",
        "history.csv",
        "dual_report.json",
        "manifest.json",
        "config.json",
    ] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn training_is_reproducible_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 40);
    for name in ["a", "b"] {
        let out = bin()
            .args(["train", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join(name))
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let read = |name: &str| std::fs::read(dir.path().join(name).join("checkpoint_field.wlf")).unwrap();
    assert_eq!(read("a"), read("b"));
}

#[test]
fn env_override_changes_iteration_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 100);
    let run = dir.path().join("run");
    let out = bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&run)
        .env("WLF_TRAIN_ITERATIONS", "25")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(stdout(&out).contains("trained 25 iterations"));
}

#[test]
fn bures_oracle_prints_nine() {
    let out = bin()
        .args(["oracle", "--which", "bures", "--m0", "3,0", "--m1", "0,0"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "9");
}

#[test]
fn parabola_oracle_matches_closed_form() {
    let out = bin()
        .args([
            "oracle", "--which", "parabola", "--m0", "0,0", "--m1", "2,0", "--accel", "0,4",
            "--t", "0.5",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "1,-0.5");
}

#[test]
fn sde_mode_on_plain_transport_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 10);
    let run = dir.path().join("run");
    assert!(bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&run)
        .output()
        .unwrap()
        .status
        .success());
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&run)
        .args(["--mode", "sde", "--n", "8", "--steps", "5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_then_plot_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 20);
    let run = dir.path().join("run");
    assert!(bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&run)
        .output()
        .unwrap()
        .status
        .success());
    assert!(bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&run)
        .args(["--mode", "ode", "--n", "8", "--steps", "20"])
        .output()
        .unwrap()
        .status
        .success());
    let svg = dir.path().join("fan.svg");
    assert!(bin()
        .args(["plot", "--what", "trajectories", "--input"])
        .arg(run.join("trajectory.wlf"))
        .arg("--out")
        .arg(&svg)
        .output()
        .unwrap()
        .status
        .success());
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg"));

    let hist_svg = dir.path().join("hist.svg");
    assert!(bin()
        .args(["plot", "--what", "history", "--input"])
        .arg(run.join("history.csv"))
        .arg("--out")
        .arg(&hist_svg)
        .output()
        .unwrap()
        .status
        .success());
}

#[test]
fn malformed_config_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"problem": {"kinetic": {"kind": "w2"}}, "unknown_key": 1}"#).unwrap();
    let out = bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_grads_passes_quickly() {
    let out = bin()
        .args(["check-grads", "--trials", "10", "--seed", "1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.matches("pass").count(), 5, "output: {text}");
}

#[test]
fn eval_loo_writes_eval_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(
        &cfg,
        r#"{
  "problem": {"kinetic": {"kind": "w2"}},
  "field": {"input_dim": 2, "hidden_widths": [8]},
  "path": {"dim": 2, "hidden_widths": [8]},
  "train": {"iterations": 40, "batch_size": 16, "eval_every": 20},
  "dataset": {"source": "synth", "kind": "gaussian_drift_3pt", "m": [2.0, 0.0], "bend": [0.0, 0.5], "seed": 2, "n": 48},
  "loo": {"seeds": [0], "n_eval": 48}
}"#,
    )
    .unwrap();
    let run = dir.path().join("run");
    let out = bin()
        .args(["eval-loo", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&run)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(run.join("eval.csv")).unwrap();
    assert!(csv.starts_with("time_index,time,sampler_w1_mean"));
    assert_eq!(csv.lines().count(), 2);
}
