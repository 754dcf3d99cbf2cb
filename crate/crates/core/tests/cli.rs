mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use sdvs::simbench::{gen_case, CaseSpec};

fn sdvs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdvs")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = sdvs(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn without_timing(json: &str) -> Value {
    let mut v: Value = serde_json::from_str(json).unwrap();
    assert!(v["timing"]["elapsed_seconds"].is_number());
    v.as_object_mut().unwrap().remove("timing");
    v
}

fn case_csv(dir: &Path, n: usize, p: usize) -> String {
    let case = if p > n { 2 } else { 6 };
    let spec = CaseSpec::new(case, n, p).unwrap().with_seed(3);
    let rep = gen_case(&spec, 0).unwrap();
    let path = dir.join("train.csv");
    common::write_csv(&path, &rep.train);
    path.to_str().unwrap().to_string()
}

#[test]
fn fit_reports_envelope_and_repeats_exactly() {
    let dir = TempDir::new().unwrap();
    let input = case_csv(dir.path(), 40, 12);
    let args = ["fit", "-i", &input, "--burnin", "200", "--iters", "800", "--seed", "9", "--chains", "2"];
    let a = ok(&args);
    let b = ok(&args);
    let (va, vb) = (without_timing(&a), without_timing(&b));
    assert_eq!(va, vb);
    assert_eq!(va["schema_version"], 1);
    assert_eq!(va["command"], "fit");
    assert_eq!(va["result"]["columns"].as_array().unwrap().len(), 12);

    let csv_args = [&args[..], &["--format", "csv"]].concat();
    let c1 = ok(&csv_args);
    assert_eq!(c1, ok(&csv_args));
    assert_eq!(c1.lines().next().unwrap(), "name,prob,median,bic");
    assert_eq!(c1.lines().count(), 13);
}

#[test]
fn fit_sweep_uses_test_file() {
    let dir = TempDir::new().unwrap();
    let input = case_csv(dir.path(), 40, 12);
    let out = ok(&["fit", "-i", &input, "--test", &input, "--sweep-size", "4", "--iters", "300", "--burnin", "100"]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["result"]["size_sweep"]["on"], "test");
    assert_eq!(v["result"]["size_sweep"]["mspe"].as_array().unwrap().len(), 5);
}

#[test]
fn trace_file_has_one_row_per_retained_sweep() {
    let dir = TempDir::new().unwrap();
    let input = case_csv(dir.path(), 30, 6);
    let trace = dir.path().join("trace.csv");
    ok(&["fit", "-i", &input, "--iters", "50", "--burnin", "10", "--trace", trace.to_str().unwrap()]);
    let text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().count(), 51);
}

#[test]
fn bench_csv_has_the_six_metric_columns() {
    let out = ok(&[
        "bench", "--case", "1", "--n", "30", "--p", "30", "--reps", "2", "--burnin", "100", "--iters", "300", "--format", "csv",
    ]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "pp0,pp1,exact,superset,fdr,mspe");
    assert_eq!(lines.len(), 3);
    for row in &lines[1..] {
        let vals: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals.len(), 6);
        assert!(vals[..5].iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn screen_keeps_requested_count_plus_forced_and_intercept() {
    let dir = TempDir::new().unwrap();
    let input = case_csv(dir.path(), 60, 400);
    let reduced = dir.path().join("reduced.csv");
    let out = ok(&["screen", "-i", &input, "--keep", "198", "--force", "x400", "--write", reduced.to_str().unwrap()]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["result"]["kept"].as_array().unwrap().len(), 199);
    assert_eq!(v["result"]["predictors_with_intercept"], 200);
    assert_eq!(v["result"]["kept"][0][1], "x400");
    let header = std::fs::read_to_string(&reduced).unwrap();
    assert_eq!(header.lines().next().unwrap().split(',').count(), 200);
    assert_eq!(header.lines().count(), 61);
}

#[test]
fn oracle_compare_reports_gap() {
    let dir = TempDir::new().unwrap();
    let input = case_csv(dir.path(), 40, 6);
    let out = ok(&["oracle", "-i", &input, "--sigma2", "fixed:1.0", "--compare", "--iters", "4000"]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["result"]["models"], 64);
    assert!(v["result"]["max_abs_gap"].as_f64().unwrap() < 0.1);

    let big = case_csv(dir.path(), 40, 25);
    let out = sdvs(&["oracle", "-i", &big]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("p <= 20"));
}

#[test]
fn diagnose_generated_case() {
    let out = ok(&["diagnose", "--case", "6", "--n", "40", "--p", "12", "--format", "csv"]);
    assert_eq!(out.lines().next().unwrap(), "quantity,value");
    assert!(out.contains("flag_prior,"));
}

#[test]
fn bad_input_is_reported_with_location() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "y,a,b\n1,2,3\n4,oops,6\n").unwrap();
    let out = sdvs(&["fit", "-i", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 2") && err.contains("column a"), "{err}");
}
