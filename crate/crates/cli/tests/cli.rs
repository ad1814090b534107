use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn heatlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heatlab"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Value {
    let out = heatlab(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let root = dir.join("city");
    let mut args = vec!["synth", "--out", root.to_str().unwrap(), "--noise", "0.3"];
    args.extend_from_slice(extra);
    ok(&args);
    root
}

fn manifest(root: &Path, command: &str) -> Value {
    let text =
        std::fs::read_to_string(root.join("manifests").join(format!("{command}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn cooling_summary_recovers_internal_depth() {
    let tmp = tempfile::tempdir().unwrap();
    let root = synth(tmp.path(), &["--scenes", "10"]);
    let w = root.to_str().unwrap();
    let s = ok(&["analyze", "cooling", "-w", w]);
    let depth = s["internal_min_dt"].as_f64().unwrap();
    assert!((depth + 2.6).abs() < 0.05, "internal depth {depth}");
    assert!(root.join("analysis/cooling-truth.json").is_file());
    let m = manifest(&root, "analyze-cooling");
    assert_eq!(m["command"], "analyze-cooling");
    assert_eq!(m["outputs"][0], "analysis/cooling-truth.json");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn eval_of_identical_directories_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let root = synth(tmp.path(), &["--scenes", "10"]);
    let w = root.to_str().unwrap();
    ok(&["predict", "-w", w, "--variant", "oracle"]);
    let d = root.join("predictions/oracle");
    let s = ok(&[
        "eval",
        "--truth",
        d.to_str().unwrap(),
        "--pred",
        d.to_str().unwrap(),
    ]);
    for k in ["mae", "mbe", "mse", "rmse"] {
        assert_eq!(s["metrics"][k].as_f64(), Some(0.0), "{k}");
    }
    assert_eq!(s["scenes"], 10);
    assert!(d.join("eval.json").is_file());
}

#[test]
fn high_heat_split_on_twenty_scenes_withholds_two() {
    let tmp = tempfile::tempdir().unwrap();
    let root = synth(tmp.path(), &[]);
    let w = root.to_str().unwrap();
    let s = ok(&["split", "-w", w, "--strategy", "high-heat", "--q", "0.9"]);
    assert_eq!(
        (s["train"].as_u64(), s["val"].as_u64(), s["test"].as_u64()),
        (Some(14), Some(4), Some(2))
    );
    assert_eq!(manifest(&root, "split")["summary"]["test"], 2);
    assert!(root.join("splits/high-heat.json").is_file());
}

#[test]
fn jobs_setting_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let root = synth(tmp.path(), &["--scenes", "10"]);
    let w = root.to_str().unwrap();
    let report = root.join("analysis/cooling-truth.json");
    ok(&["--jobs", "1", "analyze", "cooling", "-w", w]);
    let one = std::fs::read(&report).unwrap();
    ok(&["--jobs", "4", "analyze", "cooling", "-w", w]);
    assert_eq!(one, std::fs::read(&report).unwrap());
}

#[test]
fn relative_workspace_resolves_under_env_root() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), &["--scenes", "10"]);
    let out = Command::new(env!("CARGO_BIN_EXE_heatlab"))
        .args(["ingest", "-w", "city"])
        .env("HEATLAB_WORKSPACES", tmp.path())
        .current_dir(std::env::temp_dir())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(tmp.path().join("city/catalog.json").is_file());
}

#[test]
fn exit_codes() {
    assert_eq!(heatlab(&["--help"]).status.code(), Some(0));
    assert_eq!(
        heatlab(&["split", "-w", "x", "--strategy", "sideways"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(heatlab(&["frobnicate"]).status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nothing-here");
    assert_eq!(
        heatlab(&["ingest", "-w", missing.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );
    let root = synth(tmp.path(), &["--scenes", "10"]);
    let w = root.to_str().unwrap();
    let out = heatlab(&["analyze", "cooling", "-w", w, "--variant", "V1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("V1"));
}

#[test]
fn inpaint_result_is_persisted_under_its_id() {
    let tmp = tempfile::tempdir().unwrap();
    let root = synth(tmp.path(), &["--scenes", "10"]);
    let spec = tmp.path().join("spec.json");
    let (x0, y0) = (500_000.0 + 251.0 * 30.0, 5_000_000.0 - 251.0 * 30.0);
    std::fs::write(
        &spec,
        serde_json::json!({"polygon": [[x0, y0], [x0 + 300.0, y0], [x0 + 300.0, y0 - 300.0], [x0, y0 - 300.0]]}).to_string(),
    )
    .unwrap();
    let s = ok(&[
        "inpaint",
        "-w",
        root.to_str().unwrap(),
        "--spec",
        spec.to_str().unwrap(),
        "--variant",
        "oracle",
    ]);
    assert_eq!(s["edited_pixels"], 100);
    assert!(s["mean_delta_in_mask"].as_f64().unwrap() < -0.5);
    let id = s["id"].as_str().unwrap();
    let stored: Value = serde_json::from_str(
        &std::fs::read_to_string(root.join("interventions").join(id).join("result.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(stored["id"], id);
    assert_eq!(stored["edited_pixels"], 100);
}
