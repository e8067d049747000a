use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pagecurve_core::circuit::{parse, Op};

fn pagecurve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pagecurve"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.cfg");
    fs::write(
        &path,
        "# three plus three sites, exact environment\nn_init = 3\nm_init = 3\nperiod = 1\ntau = 0.1\nenv_source = exact\n",
    )
    .unwrap();
    path
}

#[test]
fn unknown_key_is_reported_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "h = 1\nfrobnicate = 2\n").unwrap();
    let out = pagecurve(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("frobnicate"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = pagecurve(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        csvs.push(fs::read(out_dir.join("run.csv")).unwrap());
        assert!(out_dir.join("run.manifest").exists());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs.remove(0)).unwrap();
    assert!(text.starts_with("t,N,M,S_env,norm,discarded_weight\n"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn circuit_preset_writes_a_parseable_program() {
    let dir = tempfile::tempdir().unwrap();
    let out = pagecurve(&["run", "circuit-l6", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("fidelity"));
    let program = parse(&fs::read_to_string(dir.path().join("circuit-l6_two-step.gates")).unwrap()).unwrap();
    assert_eq!(program.gate_count(Op::RZZ), 10);
    assert_eq!(program.gate_count(Op::H), 2);
}

#[test]
fn export_circuit_to_stdout() {
    let out = pagecurve(&["export-circuit", "circuit-l6", "--steps", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.matches("# evaporation event").count(), 3);
    let program = parse(&text).unwrap();
    assert_eq!(program.gate_count(Op::RX), 4 * 12);
}

#[test]
fn infeasible_size_is_refused_with_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let out = pagecurve(&[
        "run",
        "fig3-page-curve",
        "--scale",
        "paper",
        "--config",
        small_config(dir.path()).to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    // the small config itself is feasible
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let huge = dir.path().join("huge.cfg");
    fs::write(&huge, "max_bond = 1000000\n").unwrap();
    let out = pagecurve(&["run", "fig3-page-curve", "--config", huge.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("infeasible") && err.contains("MiB"), "{err}");
}

#[test]
fn verify_runs_a_filtered_subset() {
    let dir = tempfile::tempdir().unwrap();
    let out = pagecurve(&["verify", "--only", "10,2", "--out", dir.path().to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("[PASS]  2") && stdout.contains("[PASS] 10"));
    assert!(stdout.contains("2/2 criteria passed"));
    let bad = pagecurve(&["verify", "--only", "nonsense"]);
    assert!(!bad.status.success());
}
