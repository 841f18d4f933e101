use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sesem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sesem"))
        .args(args)
        .env_remove("SESEM_THREADS")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_full_fraction_writes_every_triple() {
    let dir = tempfile::tempdir().unwrap();
    let out = sesem(&["generate", "--nx", "20", "--nt", "4", "--fraction", "1.0", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["n_o"], 2 * 4 * 21);
    let text = std::fs::read_to_string(dir.path().join("observations.txt")).unwrap();
    let entries = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(entries, 2 * 4 * 21);
    let truth = std::fs::read_to_string(dir.path().join("truth.txt")).unwrap();
    assert_eq!(truth.lines().filter(|l| !l.starts_with('#')).count(), 21);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = path(dir.path());
    for args in [
        vec!["generate", "--nx", "1", "--out", o],
        vec!["solve", "--reduction", "affine", "--nred", "0", "--out", o],
        vec!["solve", "--reduction", "spline", "--nred", "5", "--out", o],
        vec!["solve", "--fraction", "0", "--out", o],
        vec!["experiment", "nr9", "--out", o],
        vec!["solve", "--bogus"],
    ] {
        assert_eq!(sesem(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn missing_observation_file_is_runtime_error() {
    let out = sesem(&["solve", "--obs", "/nonexistent/obs.txt", "--out", "/tmp"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn solve_reports_record_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let gen = sesem(&["generate", "--nx", "40", "--nt", "6", "--fraction", "0.3", "--seed", "5", "--out", path(dir.path())]);
    assert_eq!(gen.status.code(), Some(0));
    let obs = dir.path().join("observations.txt");
    let out_dir = dir.path().join("run");
    let out = sesem(&[
        "solve",
        "--obs",
        path(&obs),
        "--epsilon",
        "1e-8",
        "--replicates",
        "3",
        "--seed",
        "5",
        "--out",
        path(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["schema_version"], 1);
    let reps = v["replicates"].as_array().unwrap();
    assert_eq!(reps.len(), 3);
    for (r, row) in reps.iter().enumerate() {
        assert_eq!(row["seed"], 5 + r as u64);
        assert_eq!(row["reached_target"], true);
    }
    let iters: Vec<f64> = reps.iter().map(|r| r["outer_iters"].as_f64().unwrap()).collect();
    let mean = iters.iter().sum::<f64>() / 3.0;
    assert!((v["aggregates"]["outer_iters"]["mean"].as_f64().unwrap() - mean).abs() <= 1e-12 * mean.max(1.0));
    let trace = std::fs::read_to_string(out_dir.join("trace_0.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "k,f,ssq,alpha,step_kind,accel_used,fevals_cum");
    assert_eq!(trace.lines().count() - 1, reps[0]["outer_iters"].as_u64().unwrap() as usize);
}

#[test]
fn identical_flags_give_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let args = ["solve", "--nx", "30", "--nt", "5", "--fraction", "0.4", "--replicates", "2", "--epsilon", "1e-7"];
        let mut v: Vec<&str> = args.to_vec();
        v.extend(["--out", path(d.path())]);
        assert_eq!(sesem(&v).status.code(), Some(0));
    }
    for f in ["trace_0.csv", "trace_1.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }
}

#[test]
fn budget_exhaustion_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = sesem(&["solve", "--nx", "30", "--replicates", "1", "--budget-fevals", "30", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out)["replicates"][0]["termination"], "feval_budget");
    let out = sesem(&["solve", "--nx", "30", "--replicates", "1", "--max-iters", "1", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn nr1_writes_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = sesem(&[
        "experiment",
        "nr1",
        "--nx",
        "20",
        "--nts",
        "2,6",
        "--epsilons",
        "1e-6,1e-7",
        "--fraction",
        "0.3",
        "--future-stride",
        "3000",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("nr1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert!(csv.starts_with("n_x,n_t,n_o,nu,epsilon"));
}

#[test]
fn nr3_acceleration_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let out = sesem(&[
        "experiment",
        "nr3",
        "--nx",
        "40",
        "--nt",
        "6",
        "--fraction",
        "0.3",
        "--epsilon",
        "1e-8",
        "--replicates",
        "2",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("nr3.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let acc_col = header.iter().position(|h| *h == "accelerate").unwrap();
    let aa_col = header.iter().position(|h| *h == "accel_accepts").unwrap();
    let accepted: usize = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|f| f[acc_col] == "true")
        .map(|f| f[aa_col].parse::<usize>().unwrap())
        .sum();
    assert!(accepted > 0);
    assert!(dir.path().join("nr3_traces.csv").exists());
}
