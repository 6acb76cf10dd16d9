//! End-to-end runs of the `dulac` binary on the germ corpus.

use std::path::PathBuf;
use std::process::{Command, Output};

fn germ(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "germs", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn dulac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dulac")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn invariants_of_the_normal_form() {
    let o = dulac(&["invariants", &germ("f_F_2_0_half.germ")]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "(alpha, m, rho) = (2, 0, 1/2)");
    let o = dulac(&["invariants", &germ("f_F_2_0_half.germ"), "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["rho"], "1/2");
    assert_eq!(v["fatou_route_agrees"], true);
}

#[test]
fn formal_class_mismatch() {
    let o = dulac(&["compare", &germ("ex1_f.germ"), &germ("ex1_g.germ")]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("NOT conjugate: formal class (rho differs)"));
}

#[test]
fn numeric_fatou_prints_value_and_constant() {
    let o = dulac(&["fatou", "--numeric", &germ("ex1_g.germ"), "--at", "0.05", "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let psi = v["psi"][0].as_f64().unwrap() - v["constant"][0].as_f64().unwrap();
    let oracle = -1.0 / 0.05 + 0.05f64.ln();
    assert!((psi - oracle).abs() < 1e-8);
    let o = dulac(&["fatou", "--numeric", &germ("ex1_g.germ"), "--at", "0.05"]);
    assert!(stdout(&o).contains("additive constant C ="));
    let o = dulac(&["fatou", "--formal", &germ("ex1_g.germ"), "--z-order", "4", "--l-depth", "2"]);
    assert!(stdout(&o).contains("Psi = -z^-1 - l^-1 + C"));
}

#[test]
fn orbit_csv_and_petal_artifacts() {
    let o = dulac(&["orbit", &germ("z_minus_z2.germ"), "--at", "0.3", "--steps", "5"]);
    let text = stdout(&o);
    assert!(o.status.success());
    assert_eq!(text.lines().next(), Some("n,re_zeta,im_zeta,level"));
    assert_eq!(text.lines().count(), 7);
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("petals.svg");
    let o = dulac(&["petals", &germ("z_minus_z2.germ"), "--levels", "-1:1", "--out", svg.to_str().unwrap(), "--workers", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    assert!(stdout(&o).contains("opening"));
}

#[test]
fn horn_maps_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("moduli.json");
    let o = dulac(&["horn-maps", &germ("f1_2_0_0.germ"), "--levels", "0:0", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["maps"].as_array().unwrap().len(), 2);
    assert!(stdout(&o).contains("Fatou constants"));
}

#[test]
fn gevrey_reports_and_check_status() {
    let o = dulac(&["gevrey", "--family", "log-gevrey", "--p", "3", "--order", "3"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("PASS"));
    let o = dulac(&["gevrey", "--family", "factorial", "--order", "0.5"]);
    assert_eq!(o.status.code(), Some(4));
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("a.csv");
    let rows: String = (0..40).map(|k| format!("{k},{},0\n", 0.5f64.powi(k))).collect();
    std::fs::write(&csv, format!("k,re,im\n{rows}")).unwrap();
    let o = dulac(&["gevrey", "--coeffs", csv.to_str().unwrap(), "--format", "json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["m_hat"].as_f64().unwrap() > 1.0);
}

#[test]
fn validation_errors_exit_with_2() {
    assert_eq!(dulac(&["petals", &germ("z_minus_z2.germ"), "--levels", "3:-3"]).status.code(), Some(2));
    assert_eq!(dulac(&["invariants", "/nonexistent.germ"]).status.code(), Some(2));
    assert_eq!(dulac(&["fatou", &germ("ex1_g.germ")]).status.code(), Some(2));
    assert_eq!(dulac(&["fatou", "--numeric", &germ("ex1_g.germ")]).status.code(), Some(2));
    assert_eq!(dulac(&["invariants", &germ("ex1_g.germ"), "--format", "svg"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.germ");
    std::fs::write(&bad, "name=b\nbackend=series\nbody=z - 2*z^2\nalpha=2\nm=0\na=1\n").unwrap();
    let o = dulac(&["invariants", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[germ-language]"));
}

#[test]
fn numeric_failures_exit_with_3() {
    let o = dulac(&["fatou", "--numeric", &germ("z_minus_z2.germ"), "--at", "0.9"]);
    assert_eq!(o.status.code(), Some(3));
    let o = dulac(&["orbit", &germ("z_minus_z2.germ"), "--at", "0.9"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[numeric]"));
}
