//! End-to-end checks of the `warynav` binary: exit codes, output layout,
//! and run-to-run determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_warynav")
}

fn run(args: &[&str]) -> Output {
    Command::new(binary())
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn tiny_train_config(out: &Path) -> String {
    format!(
        r#"{{
  "seed": 5,
  "output_dir": "{}",
  "env": {{ "timeout_steps": 40 }},
  "ensemble": {{ "members": 2, "passes": 2, "hidden_size": 4 }},
  "trainer": {{
    "sessions": 2,
    "episodes_per_session": 2,
    "epochs_per_session": 1,
    "schedule_steps": 120
  }},
  "eval": {{ "sessions": 2, "episodes": 2 }}
}}"#,
        out.display()
    )
}

#[test]
fn missing_config_exits_with_config_error_and_names_the_path() {
    let out = run(&["train", "--config", "/nonexistent/warynav.json"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("/nonexistent/warynav.json"),
        "stderr must name the path: {stderr}"
    );
}

#[test]
fn unknown_config_key_exits_with_config_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "bad.json",
        r#"{ "seed": 1, "output_dir": "x", "trainer": { "sessionz": 3 } }"#,
    );
    let out = run(&["train", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("sessionz"), "stderr must name the key: {stderr}");
}

#[test]
fn train_writes_checkpoint_metrics_and_config_echo() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let config = write_config(dir.path(), "train.json", &tiny_train_config(&out_dir));
    let out = run(&["train", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("checkpoint/manifest.json").exists());
    assert!(out_dir.join("checkpoint/member_000.json").exists());
    assert!(out_dir.join("metrics.csv").exists());
    assert!(out_dir.join("config.json").exists());
    assert!(out_dir.join("dataset.bin").exists());
    assert!(out_dir.join("dataset.bin.manifest.json").exists());
}

#[test]
fn repeated_training_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let config = write_config(dir.path(), "train.json", &tiny_train_config(Path::new("unused")));
    for out_dir in [&out_a, &out_b] {
        let out = run(&[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let metrics_a = std::fs::read(out_a.join("metrics.csv")).unwrap();
    let metrics_b = std::fs::read(out_b.join("metrics.csv")).unwrap();
    assert_eq!(metrics_a, metrics_b);
    let member_a = std::fs::read(out_a.join("checkpoint/member_000.json")).unwrap();
    let member_b = std::fs::read(out_b.join("checkpoint/member_000.json")).unwrap();
    assert_eq!(member_a, member_b);
}

#[test]
fn evaluate_writes_report_with_exact_header_and_row_per_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let train_out = dir.path().join("train");
    let eval_out = dir.path().join("eval");
    let config = write_config(dir.path(), "cfg.json", &tiny_train_config(&train_out));
    assert_eq!(
        run(&["train", "--config", config.to_str().unwrap()]).status.code(),
        Some(0)
    );
    let out = run(&[
        "eval",
        "--config",
        config.to_str().unwrap(),
        "--checkpoint",
        train_out.join("checkpoint").to_str().unwrap(),
        "--out",
        eval_out.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(eval_out.join("report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(
        lines.next().unwrap(),
        "model,scenario,unc_mean,unc_std,collision_rate,episodes,sessions"
    );
    assert_eq!(lines.count(), 5, "one row per scenario");
    for scenario in ["none", "noise", "drop", "mask_vel", "mask_pos"] {
        assert!(eval_out.join(format!("traces_{scenario}.csv")).exists());
    }
}

#[test]
fn corrupt_checkpoint_fails_with_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let train_out = dir.path().join("train");
    let config = write_config(dir.path(), "cfg.json", &tiny_train_config(&train_out));
    assert_eq!(
        run(&["train", "--config", config.to_str().unwrap()]).status.code(),
        Some(0)
    );
    let manifest = train_out.join("checkpoint/manifest.json");
    let text = std::fs::read_to_string(&manifest)
        .unwrap()
        .replace("warynav-ensemble", "junk-format");
    std::fs::write(&manifest, text).unwrap();
    let out = run(&[
        "eval",
        "--config",
        config.to_str().unwrap(),
        "--checkpoint",
        train_out.join("checkpoint").to_str().unwrap(),
        "--out",
        dir.path().join("eval").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn toy1d_grid_covers_both_half_planes_at_configured_resolution() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("toy");
    let config = write_config(
        dir.path(),
        "toy.json",
        &format!(
            r#"{{
  "seed": 3,
  "output_dir": "{}",
  "toy1d": {{
    "train_examples": 64,
    "grid_resolution": 7,
    "epochs": 2,
    "members": 2,
    "passes": 2,
    "hidden": [8]
  }}
}}"#,
            out_dir.display()
        ),
    );
    let out = run(&["toy1d", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let grid = std::fs::read_to_string(out_dir.join("toy1d_grid.csv")).unwrap();
    let rows: Vec<&str> = grid.lines().skip(1).collect();
    assert_eq!(rows.len(), 49, "7x7 grid");
    let bearings: Vec<f64> = rows
        .iter()
        .map(|r| r.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(bearings.iter().any(|&b| b < -1.0));
    assert!(bearings.iter().any(|&b| b > 1.0));

    // Re-run into a second directory: byte-identical grid.
    let out2_dir = dir.path().join("toy2");
    let out2 = run(&[
        "toy1d",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out2_dir.to_str().unwrap(),
    ]);
    assert_eq!(out2.status.code(), Some(0));
    let grid2 = std::fs::read_to_string(out2_dir.join("toy1d_grid.csv")).unwrap();
    assert_eq!(grid, grid2);
}

#[test]
fn seed_override_changes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "cfg.json", &tiny_train_config(Path::new("unused")));
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    assert_eq!(
        run(&[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_a.to_str().unwrap(),
        ])
        .status
        .code(),
        Some(0)
    );
    assert_eq!(
        run(&[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_b.to_str().unwrap(),
            "--seed",
            "99",
        ])
        .status
        .code(),
        Some(0)
    );
    let metrics_a = std::fs::read(out_a.join("metrics.csv")).unwrap();
    let metrics_b = std::fs::read(out_b.join("metrics.csv")).unwrap();
    assert_ne!(metrics_a, metrics_b);
}
