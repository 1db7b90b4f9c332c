use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn koopid(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_koopid")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn run(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> (i32, String) {
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    koopid(&args)
}

const SHORT: &str = "[run]\nt_final = 0.8\nlog_stride = 50\n";

#[test]
fn identify_converges_with_exact_switching_flow() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "[flow]\ndelta = 0.0\nintegrator = \"exact_path\"\n[stack]\nrank_tol = 1e-9\n[run]\nlog_stride = 100\n",
    );
    let (code, err) = run("identify", &cfg, tmp.path(), &[]);
    assert_eq!(code, 0, "{err}");
    let s = summary(tmp.path());
    assert_eq!(s["converged"], true);
    assert_eq!(s["rank_condition"]["satisfied"], true);
    assert!(s["truth"]["max_abs_a_error"].as_f64().unwrap() < 1e-3);
    assert!(s["run"]["activation_time"].as_f64().is_some());
    assert_eq!(s["config"]["flow"]["integrator"], "exact_path");
}

#[test]
fn identify_with_one_sample_reports_missing_rank() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &format!("{SHORT}[stack]\ncapacity = 1\n"));
    let (code, _) = run("identify", &cfg, tmp.path(), &[]);
    assert_eq!(code, 2);
    let s = summary(tmp.path());
    assert_eq!(s["converged"], false);
    assert_eq!(s["rank_condition"]["satisfied"], false);
    assert_eq!(s["rank_condition"]["samples"], 1);
    assert_eq!(s["stack_capacity_covers_regressor"], false);
    assert!(s["run"]["activation_time"].is_null());
}

#[test]
fn malformed_config_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[flow]\nalpah = 3.0\n");
    for cmd in ["identify", "meta", "oracle"] {
        let (code, err) = run(cmd, &cfg, &tmp.path().join(cmd), &[]);
        assert_eq!(code, 1);
        assert!(err.contains("line 2"), "{err}");
    }
    let (code, _) = run("identify", &tmp.path().join("missing.toml"), tmp.path(), &[]);
    assert_eq!(code, 1);
}

#[test]
fn zero_meta_budget_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[meta]\nt_outer = 0\n");
    let (code, err) = run("meta", &cfg, tmp.path(), &[]);
    assert_eq!(code, 1);
    assert!(err.contains("t_outer"));
}

#[test]
fn identify_output_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SHORT);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run("identify", &cfg, &a, &[]);
    run("identify", &cfg, &b, &[]);
    let csv_a = std::fs::read(a.join("timeseries.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("timeseries.csv")).unwrap());
    assert_eq!(std::fs::read(a.join("summary.json")).unwrap(), std::fs::read(b.join("summary.json")).unwrap());

    let text = String::from_utf8(csv_a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# koopid timeseries v1"));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 10 + 4 + 4 + 20);
    assert_eq!(&header[..3], &["t", "x1", "x2"]);
    assert_eq!(*header.last().unwrap(), "b_4_1");
    let rows: Vec<&str> = lines.collect();
    assert!(rows.iter().all(|r| r.split(',').count() == header.len()));
    assert!(rows.len() > 100);
    let echo = std::fs::read_to_string(a.join("config.toml")).unwrap();
    assert!(echo.contains("t_final = 0.8"));
}

const SMALL_SPACE: &str = "[run]\nt_final = 0.8\nlog_stride = 0\n[meta]\nt_outer = 6\nn_init = 2\nwhitelist = [\"110100001\", \"100000000\", \"010000000\", \"110100010\"]\n";

#[test]
fn meta_writes_history_and_honours_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL_SPACE);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run("meta", &cfg, &a, &["--seed", "4"]).0, 0);
    assert_eq!(run("meta", &cfg, &b, &["--seed", "4"]).0, 0);
    let hist = std::fs::read_to_string(a.join("meta_history.csv")).unwrap();
    assert_eq!(hist, std::fs::read_to_string(b.join("meta_history.csv")).unwrap());
    let mut lines = hist.lines();
    assert_eq!(lines.next(), Some("# koopid meta_history v1"));
    assert_eq!(lines.next(), Some("iter,mask,n_xi,ell,J_R,best_so_far"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert!(!rows.is_empty() && rows.len() <= 6);
    let mut prev = f64::INFINITY;
    for r in &rows {
        let (ell, j, best): (f64, f64, f64) = (r[3].parse().unwrap(), r[4].parse().unwrap(), r[5].parse().unwrap());
        let n: f64 = r[2].parse().unwrap();
        assert!((j - (ell + 0.1 * n)).abs() < 1e-12);
        assert!(best <= prev);
        prev = best;
    }
    let s = summary(&a);
    assert_eq!(s["seed"], 4);
    assert_eq!(s["config"]["meta"]["seed"], 4);
    assert!(std::fs::read_to_string(a.join("config.toml")).unwrap().contains("seed = 4"));
    assert!(s["theta_star"].as_array().is_some());
    assert_eq!(s["candidates"].as_array().unwrap().len(), rows.len());
}

#[test]
fn oracle_scores_every_candidate_regardless_of_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL_SPACE);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run("oracle", &cfg, &a, &["--jobs", "1"]).0, 0);
    assert_eq!(run("oracle", &cfg, &b, &["--jobs", "3"]).0, 0);
    let hist = std::fs::read_to_string(a.join("meta_history.csv")).unwrap();
    assert_eq!(hist, std::fs::read_to_string(b.join("meta_history.csv")).unwrap());
    assert_eq!(hist.lines().count(), 2 + 4);
    let s = summary(&a);
    assert_eq!(s["evaluations"], 4);
    let best = s["J_R_star"].as_f64().unwrap();
    for c in s["candidates"].as_array().unwrap() {
        assert!(c["J_R"].as_f64().unwrap() >= best);
    }
}
