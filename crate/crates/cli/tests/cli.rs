use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const VG: &str = r#"{"market": {"r": 0.01, "T": 1.0, "K": 1.0,
  "model": {"kind": "vg", "params": {"C": 1.0, "G": 5.0, "M": 8.0}, "mu": -0.05}}}"#;
const MERTON: &str = r#"{"market": {"r": 0.01, "T": 1.0, "K": 1.0,
  "model": {"kind": "merton", "params": {"gamma": 1.0, "m": -0.1, "delta": 0.3}, "mu": -0.1, "sigma": 0.2}}}"#;
const BROWNIAN: &str = r#"{"market": {"r": 0.01, "T": 1.0, "K": 1.0,
  "model": {"kind": "brownian", "mu": -0.03, "sigma": 0.2}}}"#;

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn lcop(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcop"))
        .args(args)
        .arg("--config")
        .arg(config)
        .env("LCOP_THREADS", "1")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn check_flags_variance_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let out = lcop(&["check"], &write_config(dir.path(), "vg.json", VG));
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.contains("Assumption 3: FAIL (decay)"), "{text}");
    assert!(text.contains("lcop malliavin"));
}

#[test]
fn check_passes_for_merton() {
    let dir = tempfile::tempdir().unwrap();
    let out = lcop(&["check", "--format", "json"], &write_config(dir.path(), "m.json", MERTON));
    assert_eq!(out.status.code(), Some(0));
    let body = stdout(&out);
    let report: serde_json::Value = serde_json::from_str(body.lines().nth(1).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
}

#[test]
fn hedge_emits_the_default_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = lcop(&["hedge"], &write_config(dir.path(), "m.json", MERTON));
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# lcop "));
    assert_eq!(lines.next().unwrap(), "t,S,xi,kappa,nu_integral,err_estimate");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 50 * 101);
    assert!(rows.iter().all(|r| r.len() == 6 && r[2].is_finite()));
}

#[test]
fn verify_fs_without_jumps_has_no_orthogonal_part() {
    let dir = tempfile::tempdir().unwrap();
    let out = lcop(&["verify-fs", "--paths", "200", "--steps", "10,20"], &write_config(dir.path(), "b.json", BROWNIAN));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let body = stdout(&out);
    let v: serde_json::Value = serde_json::from_str(body.lines().nth(1).unwrap()).unwrap();
    for r in v["reports"].as_array().unwrap() {
        assert!(r["max_abs_l"].as_f64().unwrap() < 1e-12);
    }
}

#[test]
fn output_is_stable_for_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "b.json", BROWNIAN);
    let args = ["verify-fs", "--paths", "100", "--steps", "10", "--seed", "7"];
    let a = stdout(&lcop(&args, &cfg));
    let b = stdout(&lcop(&args, &cfg));
    assert_eq!(a, b);
    let header: serde_json::Value = serde_json::from_str(a.lines().next().unwrap()).unwrap();
    assert_eq!(header["command"], "verify-fs");
    assert_eq!(header["config_sha256"].as_str().unwrap().len(), 64);
    let other = stdout(&lcop(&["verify-fs", "--paths", "100", "--steps", "10", "--seed", "8"], &cfg));
    let h2: serde_json::Value = serde_json::from_str(other.lines().next().unwrap()).unwrap();
    assert_ne!(header["config_sha256"], h2["config_sha256"]);
}

#[test]
fn artifacts_go_to_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "vg.json", VG);
    let out = lcop(&["malliavin", "--out", dir.path().to_str().unwrap()], &cfg);
    assert_eq!(out.status.code(), Some(0));
    let body = std::fs::read_to_string(dir.path().join("malliavin.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(body.lines().nth(1).unwrap()).unwrap();
    assert_eq!(v["verdict"], "Differentiable");
}

#[test]
fn errors_are_structured_json() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.json", r#"{"model": {"kind": "heston"}, "T": 1.0}"#);
    let out = lcop(&["check"], &bad);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_str(String::from_utf8(out.stderr).unwrap().trim()).unwrap();
    assert!(err["error"]["message"].as_str().unwrap().contains("heston"));

    let merton = write_config(dir.path(), "m.json", MERTON);
    let out = lcop(&["hedge", "--tol", "-1"], &merton);
    assert_eq!(out.status.code(), Some(2));
    let out = lcop(&["check"], &dir.path().join("missing.json"));
    assert_eq!(out.status.code(), Some(2));
}
