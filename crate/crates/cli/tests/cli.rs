use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn feller(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_feller"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_cfg(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("case.cfg");
    fs::write(&p, text).unwrap();
    p
}

fn report(dir: &Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap()
}

/// Every number sits in an object carrying `se` or a `tag`.
fn numbers_are_labelled(v: &Value, parent_ok: bool) -> bool {
    match v {
        Value::Number(_) => parent_ok,
        Value::Array(a) => a.iter().all(|x| numbers_are_labelled(x, parent_ok)),
        Value::Object(m) => {
            let ok = m.contains_key("se") || m.contains_key("tag");
            m.values().all(|x| numbers_are_labelled(x, ok))
        }
        _ => true,
    }
}

#[test]
fn minimal_config_reports_one_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("minimal.cfg");
    let o = feller(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path());
    let d = r["diagnostics"].as_array().unwrap();
    assert_eq!(d.len(), 1);
    let est = &d[0]["values"]["semigroup"];
    assert!(est["se"].as_f64().unwrap() > 0.0);
    assert!((est["value"].as_f64().unwrap() - 0.5).abs() < 5.0 * est["se"].as_f64().unwrap());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn radius_at_least_one_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        r#"
seed = 1
[sim]
dt = 0.01
horizon = 1.0
paths = 10
[models.bm]
kind = "brownian"
[[diagnostics]]
kind = "exit-bounds"
model = "bm"
center = [0.0]
radius = 1.5
"#,
    );
    let o = feller(&["exit-bounds", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("r < 1") && err.contains("diagnostics[0].radius"), "{err}");
}

#[test]
fn toml_errors_carry_positions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "seed = 1\n[sim]\ndt = \"fast\"\n");
    let o = feller(&["run", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn negative_control_separates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("negative-control.cfg");
    let o = feller(&["tv-profile", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path());
    let d = &r["diagnostics"][0];
    assert_eq!(d["values"]["strong_feller_signature"], Value::Bool(false));
    let csv = fs::read_to_string(dir.path().join("shift-tv.csv")).unwrap();
    for line in csv.lines().skip(1) {
        assert_eq!(line.split(',').nth(1), Some("1"), "{line}");
    }
    assert!(!dir.path().join("shift-ac.csv").exists(), "subcommand runs only its kind");
}

#[test]
fn failed_check_exits_four_and_still_writes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        r#"
seed = 3
[sim]
dt = 1.0
horizon = 1.0
paths = 5000
[models.bm]
kind = "brownian"
[[diagnostics]]
name = "wrong-expectation"
kind = "tv-profile"
model = "bm"
t = 1.0
x0 = [0.0]
gaps = [0.1]
expect_strong_feller = false
"#,
    );
    let out = dir.path().join("out");
    let o = feller(&["run", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(4));
    assert!(out.join("wrong-expectation.csv").exists());
    assert_eq!(report(&out)["status"], "check-failure");
}

#[test]
fn numeric_failure_exits_three_naming_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        r#"
seed = 3
[sim]
dt = 1.0
horizon = 1.0
paths = 500
[models.bm]
kind = "brownian"
[[diagnostics]]
kind = "tv-profile"
model = "bm"
t = 1.0
x0 = [0.0]
gaps = [0.1]
grid = { lower = [-0.5], width = [0.1], bins = [10] }
"#,
    );
    let out = dir.path().join("out");
    let o = feller(&["run", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("tv_profile"), "{err}");
    assert_eq!(report(&out)["status"], "numeric-failure");
}

#[test]
fn every_report_number_is_labelled() {
    for name in ["minimal", "negative-control", "analytic"] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = configs().join(format!("{name}.cfg"));
        let o = feller(&["run", cfg.to_str().unwrap()], dir.path());
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(numbers_are_labelled(&report(dir.path()), false), "{name}");
    }
}

#[test]
fn flags_override_and_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("minimal.cfg");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    feller(&["--paths", "500", "run", cfg.to_str().unwrap()], &a);
    feller(&["--paths", "500", "--seed", "9", "run", cfg.to_str().unwrap()], &b);
    let ra = report(&a);
    assert_eq!(ra["diagnostics"][0]["values"]["semigroup"]["n"], 500);
    assert_ne!(ra, report(&b));
}

#[test]
fn worker_count_does_not_change_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("minimal.cfg");
    let mut bodies = Vec::new();
    for w in ["1", "4"] {
        let out = dir.path().join(w);
        let o = Command::new(env!("CARGO_BIN_EXE_feller"))
            .env("FELLER_WORKERS", w)
            .args(["--out", out.to_str().unwrap(), "run", cfg.to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        bodies.push((fs::read(out.join("half-line.csv")).unwrap(), fs::read(out.join("report.json")).unwrap()));
    }
    assert_eq!(bodies[0], bodies[1]);
}
