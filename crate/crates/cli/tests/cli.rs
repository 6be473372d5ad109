use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn debias(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_debias"))
        .args(args)
        .output()
        .expect("spawn debias")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

const TWO_USERS: &str = "user_id,item_id,weight\nu1,x,1.0\nu2,x,0.0\n";

#[test]
fn two_users_solve_writes_exact_bias() {
    let dir = TempDir::new().unwrap();
    let ratings = write(dir.path(), "r.csv", TWO_USERS);
    let out = dir.path().join("out");
    let run = debias(&[
        "solve", "--ratings", &ratings, "--format", "csv", "--alpha", "0.5", "--epsilon", "1e-9", "--out",
        s(&out),
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));

    let bias = fs::read_to_string(out.join("bias.csv")).unwrap();
    assert_eq!(bias, "user_id,bias\nu1,0.500000000\nu2,-0.500000000\n");
    let ratings = fs::read_to_string(out.join("ratings.csv")).unwrap();
    assert_eq!(ratings, "item_id,true_rating\nx,0.500000000\n");

    let trace = read_json(&out.join("trace.json"));
    assert_eq!(trace[0]["l1_rating_delta"], Value::Null);
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "solve");
    assert_eq!(manifest["summary"]["converged"], true);
}

#[test]
fn movielens_input_is_normalized() {
    let dir = TempDir::new().unwrap();
    let ratings = write(dir.path(), "r.dat", "1::10::5::0\n2::10::1::0\n");
    let out = dir.path().join("out");
    let run = debias(&["solve", "--ratings", &ratings, "--alpha", "0.5", "--out", s(&out)]);
    assert_eq!(run.status.code(), Some(0));
    let bias = fs::read_to_string(out.join("bias.csv")).unwrap();
    assert_eq!(bias, "user_id,bias\n1,0.500000000\n2,-0.500000000\n");
}

#[test]
fn alpha_outside_unit_interval_is_rejected_before_output() {
    let dir = TempDir::new().unwrap();
    let ratings = write(dir.path(), "r.csv", TWO_USERS);
    let out = dir.path().join("out");
    for alpha in ["1.5", "0", "1", "-0.2"] {
        let run = debias(&["solve", "--ratings", &ratings, "--format", "csv", "--alpha", alpha, "--out", s(&out)]);
        assert_ne!(run.status.code(), Some(0), "alpha {alpha}");
        assert!(!out.exists(), "alpha {alpha} left output behind");
    }
}

#[test]
fn zero_iteration_budget_exits_two() {
    let dir = TempDir::new().unwrap();
    let ratings = write(dir.path(), "r.csv", TWO_USERS);
    let out = dir.path().join("out");
    let run = debias(&[
        "solve", "--ratings", &ratings, "--format", "csv", "--alpha", "0.5", "--max-iters", "0", "--out", s(&out),
    ]);
    assert_eq!(run.status.code(), Some(2));
    assert_eq!(read_json(&out.join("trace.json")), Value::Array(vec![]));
    // seed bias is reported unchanged, ratings are the plain means
    let bias = fs::read_to_string(out.join("bias.csv")).unwrap();
    assert_eq!(bias, "user_id,bias\nu1,0.000000000\nu2,0.000000000\n");
}

#[test]
fn malformed_input_is_an_error() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    for body in ["user_id,item_id,weight\nu1,x,1.5\n", "user_id,item_id,weight\nu1,x\n", "user_id,item_id,weight\nu1,x,0.1\nu1,x,0.2\n"] {
        let ratings = write(dir.path(), "bad.csv", body);
        let run = debias(&["solve", "--ratings", &ratings, "--format", "csv", "--alpha", "0.5", "--out", s(&out)]);
        assert_eq!(run.status.code(), Some(1), "{body:?}");
        assert!(!out.exists());
    }
}

#[test]
fn seed_and_override_files_are_applied() {
    let dir = TempDir::new().unwrap();
    let ratings = write(dir.path(), "r.csv", TWO_USERS);
    let seed = write(dir.path(), "seed.csv", "user_id,bias\nu1,0.5\nu2,-0.5\n");
    let overrides = write(dir.path(), "alpha.csv", "user_id,alpha\nu2,0.0\n");
    let out = dir.path().join("out");
    let run = debias(&[
        "solve", "--ratings", &ratings, "--format", "csv", "--alpha", "0.5", "--seed-bias", &seed,
        "--alpha-overrides", &overrides, "--out", s(&out),
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));

    let bad = write(dir.path(), "alpha_bad.csv", "u2,0.9\n");
    let run = debias(&[
        "solve", "--ratings", &ratings, "--format", "csv", "--alpha", "0.5", "--alpha-overrides", &bad, "--out",
        s(&dir.path().join("out2")),
    ]);
    assert_eq!(run.status.code(), Some(1));
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let synth = dir.path().join("synth");
    let run = debias(&["synth", "--users", "30", "--items", "40", "--noise", "0.05", "--seed", "9", "--out", s(&synth)]);
    assert_eq!(run.status.code(), Some(0));
    let edges = synth.join("edges.csv");
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let run = debias(&["solve", "--ratings", s(&edges), "--format", "csv", "--alpha", "0.9", "--out", s(&out)]);
        assert_eq!(run.status.code(), Some(0));
        outputs.push(["bias.csv", "ratings.csv", "trace.json"].map(|f| fs::read(out.join(f)).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);

    let again = dir.path().join("synth2");
    debias(&["synth", "--users", "30", "--items", "40", "--noise", "0.05", "--seed", "9", "--out", s(&again)]);
    assert_eq!(fs::read(&edges).unwrap(), fs::read(again.join("edges.csv")).unwrap());
}

#[test]
fn threaded_solve_matches_serial() {
    let dir = TempDir::new().unwrap();
    let synth = dir.path().join("synth");
    debias(&["synth", "--users", "60", "--items", "60", "--seed", "2", "--out", s(&synth)]);
    let edges = synth.join("edges.csv");
    let mut bias = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("t{threads}"));
        let run = debias(&[
            "solve", "--ratings", s(&edges), "--format", "csv", "--alpha", "0.9", "--threads", threads, "--out",
            s(&out),
        ]);
        assert_eq!(run.status.code(), Some(0));
        bias.push(fs::read_to_string(out.join("bias.csv")).unwrap());
    }
    assert_eq!(bias[0], bias[1]);
}

#[test]
fn eval_on_planted_data_beats_mean() {
    let dir = TempDir::new().unwrap();
    let synth = dir.path().join("synth");
    let run = debias(&["synth", "--users", "60", "--items", "80", "--density", "0.3", "--seed", "4", "--out", s(&synth)]);
    assert_eq!(run.status.code(), Some(0));
    let out = dir.path().join("eval");
    let run = debias(&[
        "eval", "--ratings", s(&synth.join("edges.csv")), "--format", "csv", "--truth", s(&synth.join("truth.csv")),
        "--alphas", "0.5,0.99", "--out", s(&out),
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));

    let report = read_json(&out.join("report.json"));
    let reports = report.as_array().unwrap();
    assert_eq!(reports.len(), 3);
    assert_eq!(reports[0]["method_label"], "mean");
    let mean_mse = reports[0]["mse_overall"].as_f64().unwrap();
    let debiased = reports[2]["mse_overall"].as_f64().unwrap();
    assert!(debiased <= mean_mse, "{debiased} > {mean_mse}");
    for f in ["bins-mean.csv", "bins-alpha-0.99.csv", "ratings-alpha-0.5.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn eval_without_overlap_fails() {
    let dir = TempDir::new().unwrap();
    let ratings = write(dir.path(), "r.csv", TWO_USERS);
    let truth = write(dir.path(), "t.csv", "y,0.4\nz,0.6\n");
    let out = dir.path().join("out");
    let run = debias(&["eval", "--ratings", &ratings, "--format", "csv", "--truth", &truth, "--out", s(&out)]);
    assert_eq!(run.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn oracle_check_agrees_on_clamp_free_graph() {
    let dir = TempDir::new().unwrap();
    let synth = dir.path().join("synth");
    debias(&["synth", "--users", "10", "--items", "10", "--density", "0.5", "--seed", "1", "--out", s(&synth)]);
    let out = dir.path().join("check");
    let run = debias(&[
        "oracle-check", "--ratings", s(&synth.join("edges.csv")), "--format", "csv", "--alpha", "0.9", "--out",
        s(&out),
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stdout));
    assert!(read_json(&out.join("manifest.json"))["summary"]["linf_gap"].as_f64().unwrap() < 1e-8);
}

#[test]
fn oracle_check_reports_clamping() {
    let dir = TempDir::new().unwrap();
    let ratings = write(dir.path(), "c.csv", "user_id,item_id,weight\nu0,i0,1.0\nu0,i1,0.0\nu1,i1,0.9\nu2,i0,1.0\n");
    let run = debias(&["oracle-check", "--ratings", &ratings, "--format", "csv", "--alpha", "0.5"]);
    assert_eq!(run.status.code(), Some(3));
}

#[test]
fn oracle_check_refuses_oversized_graph() {
    let dir = TempDir::new().unwrap();
    let mut body = String::from("user_id,item_id,weight\n");
    for u in 0..5000 {
        body.push_str(&format!("u{u},i{},0.5\n", u % 7));
    }
    let ratings = write(dir.path(), "big.csv", &body);
    let run = debias(&["oracle-check", "--ratings", &ratings, "--format", "csv", "--alpha", "0.5"]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("5000"));
}

#[test]
fn bins_counts_items() {
    let dir = TempDir::new().unwrap();
    let ratings = write(
        dir.path(),
        "r.csv",
        "user_id,item_id,weight\nu1,a,0.1\nu2,a,0.2\nu3,a,0.3\nu1,b,0.4\n",
    );
    let out = dir.path().join("bins");
    let run = debias(&["bins", "--ratings", &ratings, "--format", "csv", "--out", s(&out)]);
    assert_eq!(run.status.code(), Some(0));
    let table = fs::read_to_string(out.join("bins.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[1], "1,1,1,1");
    assert_eq!(lines[2], "2,2,3,1");
    assert_eq!(lines.len(), 12);
}

#[test]
fn help_and_bad_usage_exit_codes() {
    assert_eq!(debias(&["--help"]).status.code(), Some(0));
    assert_eq!(debias(&["solve"]).status.code(), Some(1));
    assert_eq!(debias(&["frobnicate"]).status.code(), Some(1));
}
