//! End-to-end tests of the compiled binary.

use std::path::Path;
use std::process::Command;

fn hric() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hric"))
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("exp.toml");
    std::fs::write(
        &path,
        r#"
epochs = 2
seeds = [1]
methods = ["epa"]

[scenario]
num_mbs = 2
num_sbs_per_mbs = 3
users_per_sbs = 1
slots_per_episode = 4
guidance_period_slots = 2

[agent]
hidden_width = 8
batch_size = 4
buffer_capacity = 64
"#,
    )
    .unwrap();
    path
}

#[test]
fn train_writes_expected_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out_dir = dir.path().join("out");
    let output = hric()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--output")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let curves = std::fs::read_to_string(out_dir.join("curves_epa_seed1.csv")).unwrap();
    // Header plus one row per epoch.
    assert_eq!(curves.lines().count(), 3);
    assert!(out_dir.join("manifest.json").exists());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("epa,"));
}

#[test]
fn invalid_config_exits_nonzero_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[scenario]\nbackhaul_fraction_alpha = 2.0\n").unwrap();
    let output = hric()
        .args(["train", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("backhaul_fraction_alpha"), "{stderr}");
}

#[test]
fn sweep_rejects_empty_grid() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let output = hric()
        .args(["sweep-alpha", "--alphas", "", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(!output.status.success());
}

#[test]
fn sweep_emits_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out_dir = dir.path().join("out");
    let output = hric()
        .args(["sweep-alpha", "--alphas", "0.3,0.6", "--drops", "2", "--config"])
        .arg(&config)
        .arg("--output")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let table = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.lines().nth(1).unwrap().starts_with("0.3,epa"));
}

#[test]
fn bench_reports_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out_dir = dir.path().join("out");
    let output = hric()
        .args(["bench", "--samples", "25", "--config"])
        .arg(&config)
        .arg("--output")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("median"), "{stdout}");
    assert!(stdout.contains("0.07 ms"), "{stdout}");
    let csv = std::fs::read_to_string(out_dir.join("latency.csv")).unwrap();
    assert_eq!(csv.lines().count(), 26);
}

#[test]
fn guidance_dry_run_prints_prompt_offline() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let output = hric()
        .args(["guidance-dry-run", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("MBS1:"));
    assert!(stdout.contains("sums to 1"));
}

#[test]
fn evaluate_runs_epa_without_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out_dir = dir.path().join("out");
    let output = hric()
        .args(["evaluate", "--method", "epa", "--episodes", "3", "--config"])
        .arg(&config)
        .arg("--output")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("mean total throughput"), "{stdout}");
}
