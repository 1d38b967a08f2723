//! End-to-end checks of the command-line surface: build artifacts, the
//! verify/certify exit-code contract, and certificate export.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_unitals"))
}

fn tmpdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("unitals-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn build_unital(dir: &Path, order: usize) -> PathBuf {
    let out = run(&["build", "--order", &order.to_string(), "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join(format!("unital-{order}.json"))
}

#[test]
fn build_writes_design_and_tables() {
    let dir = tmpdir("build");
    let upath = build_unital(&dir, 4);
    let text = std::fs::read_to_string(&upath).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["v"], 65);
    assert_eq!(v["blocks"].as_array().unwrap().len(), 208);
    assert_eq!(v["order"], 4);
    let tables = std::fs::read_to_string(dir.join("pg-tables-4.json")).unwrap();
    let t: serde_json::Value = serde_json::from_str(&tables).unwrap();
    assert_eq!(t["unital_point_coords"].as_array().unwrap().len(), 65);

    let upath2 = build_unital(&dir, 2);
    let v2: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(upath2).unwrap()).unwrap();
    assert_eq!(v2["v"], 9);
    assert_eq!(v2["blocks"].as_array().unwrap().len(), 12);
}

#[test]
fn build_rejects_odd_order() {
    let out = run(&["build", "--order", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_passes_on_built_unital() {
    let dir = tmpdir("verify");
    let upath = build_unital(&dir, 4);
    let out = run(&[
        "verify",
        "--input",
        upath.to_str().unwrap(),
        "--checks",
        "unital-design,condition-i,inversive-planes",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("condition-i"));
    assert!(stdout.contains("verdict: pass"));
}

#[test]
fn verify_fails_on_mutated_design_with_named_stage() {
    let dir = tmpdir("mutate");
    let upath = build_unital(&dir, 4);
    let text = std::fs::read_to_string(&upath).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    // swap one point of one line for an outside point
    let blocks = v["blocks"].as_array_mut().unwrap();
    let first = blocks[0].as_array().unwrap().clone();
    let replacement = (0..65u64)
        .find(|p| !first.iter().any(|x| x.as_u64() == Some(*p)))
        .unwrap();
    blocks[0].as_array_mut().unwrap()[0] = serde_json::json!(replacement);
    let mpath = dir.join("mutated.json");
    std::fs::write(&mpath, serde_json::to_string(&v).unwrap()).unwrap();

    let out = run(&[
        "verify",
        "--input",
        mpath.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL"));
}

#[test]
fn verify_rejects_truncated_json() {
    let dir = tmpdir("trunc");
    let upath = build_unital(&dir, 2);
    let text = std::fs::read_to_string(&upath).unwrap();
    let tpath = dir.join("truncated.json");
    std::fs::write(&tpath, &text[..text.len() / 2]).unwrap();
    let out = run(&["verify", "--input", tpath.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn certify_order_2_skips_theorem_stages() {
    let dir = tmpdir("certify2");
    let out = run(&[
        "certify-classical",
        "--order",
        "2",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("outside hypotheses"));
    assert!(stdout.contains("verdict: pass"));
}

#[test]
fn certify_order_4_and_export_certificate() {
    let dir = tmpdir("certify4");
    let out = run(&[
        "certify-classical",
        "--order",
        "4",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("classicality"));
    assert!(stdout.contains("verdict: pass"));

    let cert = dir.join("certificate-4.json");
    assert!(cert.exists());
    let exported = run(&["export-certificate", "--input", cert.to_str().unwrap()]);
    assert_eq!(exported.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&exported.stdout).contains("verdict: pass"));

    // a tampered certificate is rejected
    let text = std::fs::read_to_string(&cert).unwrap();
    let tampered = text.replace("\"pass\"", "\"fail\"");
    if tampered != text {
        let tpath = dir.join("tampered.json");
        std::fs::write(&tpath, tampered).unwrap();
        let bad = run(&["export-certificate", "--input", tpath.to_str().unwrap()]);
        assert_ne!(bad.status.code(), Some(0));
    }

    // reports are byte-deterministic across runs
    let report1 = std::fs::read(dir.join("report-4.txt")).unwrap();
    let dir2 = tmpdir("certify4b");
    let out2 = run(&[
        "certify-classical",
        "--order",
        "4",
        "--out",
        dir2.to_str().unwrap(),
    ]);
    assert_eq!(out2.status.code(), Some(0));
    let report2 = std::fs::read(dir2.join("report-4.txt")).unwrap();
    assert_eq!(report1, report2);
}
