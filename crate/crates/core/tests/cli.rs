//! End-to-end checks of the `sqn` binary and the comparison report.

use std::path::{Path, PathBuf};
use std::process::Command;

use sampled_qn::harness::compare::{collect_rows, compare_report, COMPARE_HEADER};
use sampled_qn::harness::config::{MethodId, ProblemId, RunConfig, ToySize};
use sampled_qn::harness::run_experiment;
use sampled_qn::trace::Budget;

fn sqn(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sqn")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &serde_json::Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(body).unwrap()).unwrap();
    path
}

fn quick_run(method: MethodId, seeds: Vec<u64>, out: &Path) {
    let mut cfg = RunConfig::new(method, ProblemId::Toy(ToySize::Small), seeds, out);
    cfg.budget = Budget { max_epochs: 10.0, ..Default::default() };
    cfg.checkpoints = vec![2.0, 5.0, 10.0];
    run_experiment(&cfg).unwrap();
}

#[test]
fn run_subcommand_writes_traces_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        &serde_json::json!({
            "method": "s-lbfgs",
            "problem": "toy-small",
            "seeds": [0, 1],
            "output_dir": out,
            "budget": {"max_epochs": 8.0},
        }),
    );
    let res = sqn(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["trace_seed0.csv", "trace_seed1.csv", "summary.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn invalid_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &serde_json::json!({"method": "s-lbfgs", "problem": "toy-small", "seeds": [], "output_dir": "x"}));
    assert_eq!(sqn(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
    let bad_method = write_config(dir.path(), &serde_json::json!({"method": "newton-cg", "problem": "toy-small", "seeds": [0], "output_dir": "x"}));
    assert_eq!(sqn(&["run", "--config", bad_method.to_str().unwrap()]).status.code(), Some(1));
    let missing = dir.path().join("absent.json");
    assert_eq!(sqn(&["run", "--config", missing.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn every_seed_aborting_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &serde_json::json!({
            "method": "gd",
            "problem": "quadratic:5",
            "seeds": [0, 1],
            "output_dir": dir.path().join("out"),
            "hyper": {"step": {"constant": 1e200}},
            "budget": {"max_epochs": 50.0},
        }),
    );
    let res = sqn(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn gen_data_writes_labelled_points() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("toy.csv");
    assert!(sqn(&["gen-data", "--seed", "4", "--out", out.to_str().unwrap()]).status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().count() > 10);
    let again = dir.path().join("toy2.csv");
    assert!(sqn(&["gen-data", "--seed", "4", "--out", again.to_str().unwrap()]).status.success());
    assert_eq!(text, std::fs::read_to_string(&again).unwrap());
}

#[test]
fn compare_single_method_single_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    quick_run(MethodId::Gd, vec![7], &run);
    let out = dir.path().join("cmp.csv");
    let n = compare_report(&[run], &out).unwrap();
    assert_eq!(n, 3);
    let mut reader = csv::Reader::from_path(&out).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, COMPARE_HEADER);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    let epochs: Vec<&str> = rows.iter().map(|r| &r[2]).collect();
    assert_eq!(epochs, ["2", "5", "10"]);
    assert!(rows.iter().all(|r| &r[0] == "gd" && &r[1] == "7"));
}

#[test]
fn compare_two_methods_sorted_by_method_then_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    quick_run(MethodId::SLsr1, vec![2, 1], &a);
    quick_run(MethodId::Adam, vec![3], &b);
    let rows = collect_rows(&[a.clone(), b.clone()]);
    assert_eq!(rows.len(), 9);
    let keys: Vec<(String, u64)> = rows.iter().map(|r| (r.method.clone(), r.seed)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert_eq!(rows[0].method, "adam");
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.accuracy) && r.loss.is_finite()));
}

#[test]
fn compare_over_empty_directory_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp.csv");
    let res = sqn(&["compare", dir.path().to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("warning"));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.trim_end(), COMPARE_HEADER.join(","));
}

#[test]
fn spectrum_subcommand_writes_checkpoint_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("spec");
    let cfg = write_config(dir.path(), &serde_json::json!({"iterations": 12, "memory": 4, "output_dir": out}));
    let res = sqn(&["spectrum", "--config", cfg.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csvs = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("spectrum_checkpoint"))
        .count();
    assert_eq!(csvs, 3);
    assert!(out.join("spectrum_summary.json").is_file());
}
