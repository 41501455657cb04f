use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use carleman_lab::cli::report::{series_csv, Outcome, VerificationReport};
use carleman_lab::cli::{execute, parse_config};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_carleman-lab"))
}

fn run_with_config(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    bin().arg("--config").arg(&cfg).arg("--out").arg(dir.join("out")).args(extra).output().unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap()
}

#[test]
fn identity_on_zero_field_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with_config(dir.path(), r#"{"schema": 1, "command": "verify-identity", "grid": {"nodes": 33}}"#, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert_eq!(r["status"], "pass");
    let names: Vec<&str> = r["records"].as_array().unwrap().iter().map(|x| x["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["identity/zero/power-log(a=1)/U=0", "pointwise/zero/power-log(a=1)/U=0"]);
}

#[test]
fn command_without_config_uses_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().arg("counterexample").arg("--out").arg(dir.path().join("out")).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let r = report(dir.path());
    let fit = r["records"].as_array().unwrap().iter().find(|x| x["name"] == "counterexample/decay-fit").unwrap();
    assert_eq!(fit["details"]["q_minus"], -3.0);
    assert_eq!(fit["details"]["q_plus"], 2.0);
    assert_eq!(fit["status"], "pass");
}

#[test]
fn counterexample_with_explicit_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with_config(dir.path(), r#"{"schema": 1, "command": "counterexample", "counterexample": {"a": 6, "k": 2.5}}"#, &[]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(dir.path())["notes"]["counterexample.q_minus"], "-3");
}

#[test]
fn rho_not_below_omega_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"schema": 1, "command": "verify-identity",
                  "grid": {"region": {"rho": 4, "omega": 1, "sigma": 0.1, "tau": 10}}}"#;
    let out = run_with_config(dir.path(), cfg, &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("grid.region.rho"), "{err}");
    assert!(!dir.path().join("out/report.json").exists());
}

#[test]
fn type_errors_carry_the_field_path() {
    let e = parse_config(r#"{"schema": 1, "command": "limits", "limits": {"count": "six"}}"#).unwrap_err();
    assert_eq!(e.path, "limits.count");
    let e = parse_config(r#"{"schema": 1, "command": "limits", "limtis": {}}"#).unwrap_err();
    assert!(e.message.contains("limtis"), "{e}");
    let e = parse_config(r#"{"schema": 2, "command": "limits"}"#).unwrap_err();
    assert_eq!(e.path, "schema");
    let e = parse_config(r#"{"schema": 1, "command": "verify-carleman", "grid": {"region": {"rho": 2, "omega": 10, "sigma": 0.1, "tau": 10}}}"#)
        .unwrap_err();
    assert_eq!(e.path, "grid.region");
    let e = parse_config(r#"{"schema": 1, "command": "solve", "solve": {"courant": 1.5}}"#).unwrap_err();
    assert_eq!(e.path, "solve.courant");
}

#[test]
fn unknown_command_and_mismatch_exit_2() {
    let out = bin().arg("verify-everything").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out = run_with_config(dir.path(), r#"{"schema": 1, "command": "limits"}"#, &["counterexample"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("command"));
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let out = bin().arg("counterexample").arg("--out").arg(blocker.join("out")).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn missing_config_file_exits_3() {
    let out = bin().arg("--config").arg("/nonexistent/config.json").output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn failing_check_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    // the zero field cannot produce a non-vanishing term
    let cfg = r#"{"schema": 1, "command": "pipeline", "pipeline": {"expect": "non-vanishing I1"}}"#;
    let out = run_with_config(dir.path(), cfg, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(dir.path())["status"], "fail");
}

#[test]
fn limit_series_has_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"schema": 1, "command": "limits", "limits": {"kind": "tau-to-infinity", "count": 5}}"#;
    let out = run_with_config(dir.path(), cfg, &["--format", "csv-bundle"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("out/series/limits_tau-to-infinity.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "name,param,value");
    assert_eq!(lines.len(), 1 + 5);
    assert!(lines[1].starts_with("limits/tau-to-infinity,1e4,"));
}

#[test]
fn solve_writes_a_field_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"schema": 1, "command": "solve", "field": {"kind": "dalembert"}, "grid": {"nodes": 17}, "solve": {"dr": 0.02}}"#;
    let out = run_with_config(dir.path(), cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = fs::read_to_string(dir.path().join("out/field.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("u,v,f,h,value"));
    assert_eq!(csv.lines().count(), 1 + 17 * 17);
}

#[test]
fn identical_configs_give_identical_reports() {
    let cfg = parse_config(r#"{"schema": 1, "command": "verify-identity", "field": {"kind": "gaussian-bump"}, "grid": {"nodes": 33}}"#).unwrap();
    let (a, _) = execute("verify-identity", std::slice::from_ref(&cfg), 0, 100).unwrap();
    let (b, _) = execute("verify-identity", std::slice::from_ref(&cfg), 0, 100).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let (c, _) = execute("verify-identity", std::slice::from_ref(&cfg), 0, 200).unwrap();
    assert_ne!(a.to_json().unwrap(), c.to_json().unwrap());
    assert_eq!(a.environment.stability_hash, c.environment.stability_hash);

    let mut other = cfg;
    other.seed += 1;
    let (d, _) = execute("verify-identity", &[other], 0, 100).unwrap();
    assert_ne!(a.environment.stability_hash, d.environment.stability_hash);
}

#[test]
fn empty_report_is_valid_json() {
    let r = VerificationReport::assemble("none", Value::Null, &Outcome::default(), 0).unwrap();
    let v: Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    assert_eq!(v["records"], Value::Array(vec![]));
    assert_eq!(v["status"], "pass");
}

#[test]
fn series_csv_layout() {
    let rec = carleman_lab::verifier::CheckRecord::flag("a/b", true).with_series(vec![(1.0, 2.5), (2.0, -0.5)]);
    let text = String::from_utf8(series_csv(&rec).unwrap()).unwrap();
    assert_eq!(text, "name,param,value\na/b,1e0,2.5e0\na/b,2e0,-5e-1\n");
}
