use std::path::Path;
use std::process::Command;

use cocycle::cli::{parse_config, parse_str, run_scenario, Experiment, InstanceKind, Scenario};
use cocycle::Error;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cocycle"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn missing_file_is_a_config_error() {
    let err = parse_config(Path::new("/definitely/not/here.toml")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let out = bin().args(["validate", "/definitely/not/here.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_prints_resolved_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "toy.toml", "instance = \"toy\"\nexperiment = \"gamma\"\n");
    let out = bin().arg("validate").arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let again = parse_str(&text).unwrap();
    assert_eq!(again.model.eigenvalues, Some(vec![1.0, 1.5]));
    assert_eq!(again.attractor.gamma_grid, Some(64));
}

#[test]
fn negative_viscosity_exits_two_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "g.toml", "instance = \"galerkin\"\nexperiment = \"pullback\"\n[model]\nnu = -0.5\n");
    let out = bin().arg("run").arg(&p).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.nu"));
}

#[test]
fn bad_epsilon_list_is_rejected() {
    let err = parse_str("instance = \"toy\"\nexperiment = \"averaging\"\n[averaging]\nepsilons = [0.1, 0.1, 0.05]\n").unwrap_err();
    assert!(matches!(err, Error::Range { ref key, .. } if key == "averaging.epsilons"));
}

#[test]
fn cubic_guard_run_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "c.toml", "instance = \"cubic-regression\"\nexperiment = \"full-suite\"\n");
    let out_dir = dir.path().join("out");
    let out = bin().arg("run").arg(&p).arg("--out").arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let guard = std::fs::read_to_string(out_dir.join("guard.csv")).unwrap();
    assert!(guard.lines().nth(1).unwrap().contains("true"));
    assert!(!out_dir.join("FAILED").exists());
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert!(summary.starts_with("assertion,paper_ref,tolerance,measured,pass\n"));
}

#[test]
fn zero_tolerance_fails_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "l.toml",
        "instance = \"linear-scalar\"\nexperiment = \"verify-bounds\"\n[bounds]\ntrajectories = 3\n",
    );
    let out_dir = dir.path().join("out");
    let out = bin()
        .arg("run")
        .arg(&p)
        .args(["--tol-scale", "0", "--threads", "1", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let marker = std::fs::read_to_string(out_dir.join("FAILED")).unwrap();
    assert!(marker.contains("picard_agreement"));
    assert!(out_dir.join("bounds.csv").exists());
}

#[test]
fn divergence_error_exits_three_and_keeps_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    // stiff enough that a coarse step blows up
    let p = write(
        dir.path(),
        "d.toml",
        "instance = \"toy\"\nexperiment = \"verify-bounds\"\n[model]\neigenvalues = [1.0, 1.0]\nforcing = [{ wave = [0], harmonic = \"cos\", coeff = [40.0, 0.0] }]\n[integrator]\ndt = 0.5\n",
    );
    let out_dir = dir.path().join("out");
    let out = bin().arg("run").arg(&p).arg("--out").arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("FAILED").exists());
    assert!(out_dir.join("resolved_config.toml").exists());
    assert!(out_dir.join("summary.csv").exists());
}

#[test]
fn resolved_dump_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Scenario::new(InstanceKind::Toy, Experiment::Pullback);
    s.attractor.cloud_size = Some(4);
    s.attractor.pullback_grid = Some(4);
    s.output_dir = Some(dir.path().join("first"));
    let first = run_scenario(&s).unwrap();
    assert_eq!(first.exit_code, 0, "{:?}", first.failed());

    let dumped = std::fs::read_to_string(dir.path().join("first/resolved_config.toml")).unwrap();
    let mut again = parse_str(&dumped).unwrap();
    again.output_dir = Some(dir.path().join("second"));
    let second = run_scenario(&again).unwrap();
    for f in ["summary.csv", "attractor.csv", "attraction_profile.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("first").join(f)).unwrap(),
            std::fs::read(dir.path().join("second").join(f)).unwrap(),
            "{f} differs"
        );
    }
    assert_eq!(second.assertions, first.assertions);
}

#[test]
fn seed_override_changes_random_draws_only() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "l.toml",
        "instance = \"linear-scalar\"\nexperiment = \"verify-bounds\"\n[bounds]\ntrajectories = 2\n",
    );
    for seed in ["3", "4"] {
        let out = bin()
            .arg("run")
            .arg(&p)
            .args(["--seed", seed, "--out"])
            .arg(dir.path().join(seed))
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
    }
    let a = std::fs::read_to_string(dir.path().join("3/resolved_config.toml")).unwrap();
    assert!(a.contains("seed = 3"));
    assert_ne!(
        std::fs::read(dir.path().join("3/trajectory.csv")).unwrap(),
        std::fs::read(dir.path().join("4/trajectory.csv")).unwrap()
    );
}

#[test]
fn shipped_configs_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(root).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            let mut s = parse_config(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            s.resolve().unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
