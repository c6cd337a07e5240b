use std::path::Path;
use std::process::{Command, Output};

fn g2lab(out: &Path, config: Option<&Path>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_g2lab"));
    cmd.arg("--out").arg(out).arg("--no-timestamp");
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("lab.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn identities_pass_and_corrupted_psi_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "identities.trials = 50\n");
    let ok = g2lab(dir.path(), Some(&cfg), &["verify-identities"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    let csv = read(&dir.path().join("identities.csv"));
    assert!(csv.starts_with("check,trials,max_residual,tolerance,status\n"));
    assert!(!csv.contains(",fail"));

    let bad = g2lab(dir.path(), Some(&cfg), &["verify-identities", "--corrupt-psi"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(read(&dir.path().join("identities.csv")).contains(",fail"));
}

#[test]
fn missing_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = g2lab(dir.path(), Some(&dir.path().join("absent.cfg")), &["flow"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.cfg"));
}

#[test]
fn invalid_values_are_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    for text in ["flow.dt = 0\n", "grid.dims = 0,8\n", "bogus.key = 1\n", "seed = 1\nseed = 2\n", "flow.kind = heat\n"] {
        let cfg = write_config(dir.path(), text);
        let out = g2lab(dir.path(), Some(&cfg), &["flow"]);
        assert_eq!(out.status.code(), Some(2), "{text}");
        assert!(!dir.path().join("flow.csv").exists(), "{text}");
    }
}

#[test]
fn timestamp_header_is_optional() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "identities.trials = 5\n");
    let out = Command::new(env!("CARGO_BIN_EXE_g2lab"))
        .arg("--out")
        .arg(dir.path())
        .arg("--config")
        .arg(&cfg)
        .arg("verify-identities")
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = read(&dir.path().join("identities.csv"));
    assert!(csv.starts_with("# generated"));
    assert!(csv.lines().nth(1).unwrap().starts_with("check,"));
}

#[test]
fn same_seed_gives_identical_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let text = "flow.steps = 5\nflow.kind = dirichlet\nflow.dt = 1e-4\n";
    for dir in [&a, &b] {
        let cfg = write_config(dir.path(), text);
        assert!(g2lab(dir.path(), Some(&cfg), &["flow"]).status.success());
        assert!(g2lab(dir.path(), Some(&cfg), &["verify-variations"]).status.success());
    }
    for name in ["flow.csv", "flow.svg", "variations.csv"] {
        assert_eq!(read(&a.path().join(name)), read(&b.path().join(name)), "{name}");
    }
    let c = tempfile::tempdir().unwrap();
    let cfg = write_config(c.path(), text);
    assert!(g2lab(c.path(), Some(&cfg), &["--seed", "7", "flow"]).status.success());
    assert_ne!(read(&a.path().join("flow.csv")), read(&c.path().join("flow.csv")));
}

#[test]
fn flow_monitor_and_snapshot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "flow.steps = 4\nflow.snapshot_every = 2\nflow.dt = 2e-4\n");
    let out = g2lab(dir.path(), Some(&cfg), &["flow"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = read(&dir.path().join("flow.csv"));
    assert_eq!(csv.lines().count(), 1 + 5);
    assert!(read(&dir.path().join("flow.svg")).starts_with("<svg"));

    let snap = dir.path().join("flow_snapshot_0001.g2f");
    assert!(snap.exists());
    let cfg = write_config(dir.path(), &format!("field.snapshot = {}\ncurvature.ebin_pairs = 1\n", snap.display()));
    let out = g2lab(dir.path(), Some(&cfg), &["verify-identities"]);
    assert_eq!(out.status.code(), Some(0));
    let out = g2lab(dir.path(), Some(&cfg), &["connections"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn unnormalised_combination_is_reported_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "connections.combo = 0.5,0.5,0.5\n");
    let out = g2lab(dir.path(), Some(&cfg), &["connections"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("expected to fail"));
    let csv = read(&dir.path().join("connections.csv"));
    assert!(csv.lines().any(|l| l.contains("0.5")));
}

#[test]
fn flat_field_has_zero_curvature_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "field.kind = flat\ncurvature.dims = 8,8\n");
    let out = g2lab(dir.path(), Some(&cfg), &["curvature"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = read(&dir.path().join("curvature.csv"));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("check,max_violation,grid"));
    for line in lines.filter(|l| l.starts_with("ricci") || l.starts_with("scal")) {
        let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v, 0.0, "{line}");
    }
}

#[test]
fn missing_snapshot_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "field.snapshot = does-not-exist.g2f\n");
    let out = g2lab(dir.path(), Some(&cfg), &["curvature"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("i/o error"));
}
