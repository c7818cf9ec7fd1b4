use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_socheck"))
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], file: &Path) -> Output {
    let mut cmd = bin();
    cmd.arg(args[0]).arg(file).args(&args[1..]);
    cmd.output().unwrap()
}

const P5: &str = r#"{"n": 2, "objectives": ["v1"], "equalities": ["(- v1 (* v0 (abs v0)))"], "point": [0, 0], "c11_declared": true}"#;
const P3: &str = r#"{"n": 2, "objectives": ["(+ (pow v0 2) (pow v1 2))", "(+ (pow (- v0 1) 2) (pow v1 2))"], "point": [0.5, 0]}"#;
const EXAMPLE: &str = r#"{"n": 2, "objectives": ["(+ (* 0.5 (* v0 (abs v0))) (pow v1 2))"]}"#;

#[test]
fn check_exit_codes_follow_the_verdict() {
    let dir = TempDir::new().unwrap();
    let p5 = write(&dir, "p5.json", P5);
    let out = run(&["check", "--rays"], &p5);
    assert_eq!(out.status.code(), Some(2));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["overall"], "REJECTED");

    let p3 = write(&dir, "p3.json", P3);
    let out = run(&["check", "--rays"], &p3);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["overall"], "CONSISTENT");
    assert_eq!(report["rank_H"], 0);
}

#[test]
fn check_writes_report_file_deterministically() {
    let dir = TempDir::new().unwrap();
    let p5 = write(&dir, "p5.json", P5);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = run(&["check", "--rays", "--random-dirs", "4", "--oracle", "sampling", "--out", out.to_str().unwrap()], &p5);
        assert_eq!(o.status.code(), Some(2));
        assert!(o.stdout.is_empty());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn schema_errors_name_the_offending_field() {
    let dir = TempDir::new().unwrap();
    for (text, pointer) in [
        (r#"{"n": 2, "objectives": ["(+ v0 (abs v0"], "point": [0, 0]}"#, "/objectives/0"),
        (r#"{"n": 2, "objectives": ["v0"], "qset": {"orthant": "x"}, "point": [0, 0]}"#, "/qset/orthant"),
        (r#"{"n": 2, "objectives": ["v5"], "point": [0, 0]}"#, "/objectives/0"),
    ] {
        let f = write(&dir, "bad.json", text);
        let out = run(&["check"], &f);
        assert_eq!(out.status.code(), Some(1));
        let err = String::from_utf8(out.stderr).unwrap();
        assert!(err.contains(pointer), "{err}");
    }
}

#[test]
fn subdiff_reports_the_support_interval() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "ex.json", EXAMPLE);
    let out = run(&["subdiff", "--fn", "0", "--at", "0", "0", "--dir", "1", "0"], &f);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["support"]["lo"].as_f64().unwrap() + 1.0).abs() < 0.05);
    assert!((v["support"]["hi"].as_f64().unwrap() - 1.0).abs() < 0.05);

    let out = run(&["subdiff", "--fn", "f0", "--at", "0", "0", "--dir", "0", "1"], &f);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["support"]["lo"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert!(!v["points"].as_array().unwrap().is_empty());
}

#[test]
fn probes_run() {
    let dir = TempDir::new().unwrap();
    let p5 = write(&dir, "p5.json", P5);
    let out = run(&["probe", "--what", "wdd2", "--map", "h", "--at", "0", "0", "--dir", "-1", "0"], &p5);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let q = v["points"][0][0].as_f64().unwrap();
    assert!((q - 2.0).abs() < 1e-6, "{q}");

    let out = run(&["probe", "--what", "tangent", "--at", "0", "0", "--dir", "-1", "0", "--w", "0", "-1"], &p5);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["lemma_verdict"], true);
    assert_eq!(v["probe_verdict"], true);

    let ex = write(&dir, "ex.json", EXAMPLE);
    let out = run(&["probe", "--what", "meanvalue", "--at", "-1", "0.5", "--to", "1", "-0.5"], &ex);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pass"], true);

    let out = run(&["probe", "--what", "descent", "--at", "1", "0", "--dir", "-1", "0", "--w", "-1", "0"], &ex);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["probe"]["holds"], true);
    assert_eq!(v["wf_member"], true);

    let out = run(&["probe", "--what", "descent", "--at", "1", "0", "--dir", "-1", "0"], &ex);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn corpus_gate_passes() {
    let out = bin().args(["corpus", "--all"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(!text.contains("MISMATCH"));
    assert!(text.lines().count() >= 6);
}
