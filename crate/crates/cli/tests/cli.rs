use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qxform(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qxform"))
        .args(args)
        .current_dir(dir)
        .env_remove("QXFORM_LOG")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn read_json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    let line = text.lines().last().expect("diagnostic line");
    serde_json::from_str(line).unwrap()
}

const TQ: &str = r#"{"system": {"class": "TQ", "domain": [0, 2], "coeffs": {
  "k": {"kind": "constant", "c": 0.2}, "h": {"kind": "poly", "coeffs": [0.1, 0.05]},
  "g": {"kind": "constant", "c": 0.3}, "h2": {"kind": "constant", "c": 0.5},
  "h1": {"kind": "constant", "c": 0.1}}}}"#;

#[test]
fn example1_report_has_map_and_to_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let out = qxform(dir.path(), &["example", "ex1", "--upsilon", "0.1", "--omega", "1.0", "--t0", "0", "--out", "ex1.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(dir.path(), "ex1.json");
    for key in ["source", "target", "gauge_summary", "map_domain", "residuals", "discrepancies"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    assert_eq!(r["target"], "TO");
    assert_eq!(r["systems"]["to"]["class"], "TO");
    assert_eq!(r["systems"]["to"]["coeffs"]["g2"]["kind"], "affine_power");
    assert!(r["map"]["forward"].is_object());
    for (k, v) in r["residuals"].as_object().unwrap() {
        assert!(v.as_f64().unwrap() < 1e-7, "{k} = {v}");
    }
}

#[test]
fn example2_negative_b() {
    let dir = tempfile::tempdir().unwrap();
    let out = qxform(dir.path(), &["example", "ex2", "--a", "2", "--b", "-2", "--t0", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["command"], "example ex2");
}

#[test]
fn verify_roundtrip_passes() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "tq.json", TQ);
    let out = qxform(dir.path(), &["verify", "roundtrip", "--config", "tq.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["passed"], true);
    for (k, v) in r["checks"].as_object().unwrap() {
        assert!(v.as_f64().unwrap() < 1e-8, "{k} = {v}");
    }
}

#[test]
fn verify_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = qxform(dir.path(), &["verify", "algebra", "--tol", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "verify");
}

#[test]
fn nonpositive_mass_is_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "bad_f_sign.json",
        r#"{"system": {"class": "TM", "domain": [0, 2], "coeffs": {
            "f": {"kind": "poly", "coeffs": [1.0, -1.0]}, "f2": {"kind": "constant", "c": 0.5}}}}"#,
    );
    let out = qxform(dir.path(), &["transform", "tm-to-to", "--config", "bad_f_sign.json"]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr_json(&out);
    assert!(err["message"].as_str().unwrap().contains("time map not invertible"), "{err}");
    assert_eq!(err["exit"], 3);
}

#[test]
fn riccati_escape_is_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "esc.json",
        r#"{"system": {"class": "TQ", "domain": [0, 3], "coeffs": {
            "h2": {"kind": "constant", "c": 1.0}, "k": {"kind": "constant", "c": 1.0}}}}"#,
    );
    let out = qxform(dir.path(), &["transform", "tq-to-tm", "--config", "esc.json"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("escape"));
}

#[test]
fn unknown_key_is_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "u.json", r#"{"system": {"class": "TQ", "domain": [0, 1]}, "gird_n": 5}"#);
    let out = qxform(dir.path(), &["transform", "tq-to-tm", "--config", "u.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "validation");
    assert!(err["message"].as_str().unwrap().contains("gird_n"));
    assert_eq!(String::from_utf8(out.stderr).unwrap().lines().count(), 1);
}

#[test]
fn bad_log_setting_is_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_qxform"))
        .args(["verify", "algebra"])
        .current_dir(dir.path())
        .env("QXFORM_LOG", "loud")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "tq.json", TQ);
    for (name, args) in [
        ("a", vec!["transform", "tq-to-to", "--config", "tq.json", "--out"]),
        ("b", vec!["verify", "algebra", "--seed", "9", "--out"]),
        ("c", vec!["propagate", "--config", "tq.json", "--grid-n", "256", "--dt", "0.01", "--dump-amps", "--out"]),
    ] {
        let mut bytes = Vec::new();
        for i in 0..2 {
            let file = format!("{name}{i}");
            let mut full = args.clone();
            full.push(&file);
            let out = qxform(dir.path(), &full);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            bytes.push(fs::read(dir.path().join(&file)).unwrap());
        }
        assert_eq!(bytes[0], bytes[1], "{name}");
    }
}

#[test]
fn propagate_writes_csv_and_amplitudes() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "tq.json", TQ);
    let out = qxform(
        dir.path(),
        &["propagate", "--config", "tq.json", "--grid-n", "256", "--dt", "0.01", "--dump-amps", "--out", "p.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("p.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,norm,mean_x,mean_p,dx,dp"));
    let rows = lines.count();
    assert_eq!(rows, 201);
    let amps = fs::metadata(dir.path().join("p.csv.amps")).unwrap().len();
    assert_eq!(amps, (rows * 256 * 8) as u64);
}

#[test]
fn transform_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "tq.json", TQ);
    let out = qxform(dir.path(), &["transform", "tq-to-tm", "--config", "tq.json", "--out", "tm.json"]);
    assert!(out.status.success());
    let r = read_json(dir.path(), "tm.json");
    assert_eq!(r["systems"]["result"]["class"], "TM");
    assert!(r["residuals"]["gauge_mass"].as_f64().unwrap() < 1e-7);
    assert_eq!(r["discrepancies"].as_array().unwrap().len(), 2);

    let job = serde_json::json!({"system": r["systems"]["result"]});
    write(dir.path(), "tm_job.json", &job.to_string());
    let out = qxform(dir.path(), &["transform", "tm-to-to", "--config", "tm_job.json", "--out", "to.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(dir.path(), "to.json");
    assert_eq!(r["systems"]["result"]["class"], "TO");
    assert!(r["map_domain"]["t_prime"].is_object());
}
