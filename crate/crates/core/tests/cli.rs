use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn vrql(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vrql")).args(args).output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn generate_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let mdp_path = dir.path().join("mdp.json");
    let out = vrql(&[
        "generate", "--kind", "garnet", "--states", "6", "--actions", "2", "--branching", "2", "--gamma", "0.8", "--seed",
        "3", "--out", path_str(&mdp_path),
    ]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_slice(&std::fs::read(&mdp_path).unwrap()).unwrap();
    assert_eq!(doc["num_states"], 6);
    assert_eq!(doc["kernel"].as_array().unwrap().len(), 72);

    let solved = stdout_json(&vrql(&["solve", "--mdp", path_str(&mdp_path)]));
    assert_eq!(solved["theta_star"].as_array().unwrap().len(), 12);
    assert_eq!(solved["policy"].as_array().unwrap().len(), 6);
    assert!(solved["b0"].as_f64().unwrap() > 0.0);
}

#[test]
fn hard_instance_defaults_follow_discount() {
    let doc = stdout_json(&vrql(&["generate", "--kind", "hard_single_action", "--gamma", "0.9"]));
    let p = (4.0 * 0.9 - 1.0) / (3.0 * 0.9);
    let kernel: Vec<f64> = doc["kernel"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(kernel, vec![p, 1.0 - p, 0.0, 1.0]);
}

#[test]
fn plan_reports_schedule_and_budgets() {
    let doc = stdout_json(&vrql(&[
        "plan", "--gamma", "0.5", "--delta", "0.1", "--pairs", "2", "--epochs", "3", "--epsilon", "0.1", "--b0", "1", "--r-max",
        "1",
    ]));
    assert_eq!(doc["epoch_length_k"], 55);
    assert_eq!(doc["recenter_sizes"][1], 396);
    assert!(doc["corollary_budget"].as_u64().unwrap() > 0);
    assert!(doc["worst_case_budget"].as_u64().unwrap() > doc["t_max"].as_u64().unwrap());
}

#[test]
fn run_and_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("trace.csv");
    let spec = json!({
        "mdp_source": {"generator": {"kind": {"name": "chain", "length": 5, "success_prob": 0.8}, "num_actions": 3, "r_max": 1.0}},
        "algorithms": [
            {"type": "vrql", "num_epochs": 3, "c1": 0.1, "c2": 0.1},
            {"type": "ordinary", "num_iters": 300, "record_every": 50}
        ],
        "gammas": [0.7],
        "trials": 3,
        "base_seed": 1,
        "output_path": "trace.csv"
    });
    let spec_path = dir.path().join("spec.json");
    std::fs::write(&spec_path, spec.to_string()).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_vrql"))
        .current_dir(dir.path())
        .args(["run", "--spec", "spec.json"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "algorithm,gamma,trial,epoch,phase,samples,linf_error");

    let summary = stdout_json(&vrql(&["summarize", "--csv", path_str(&csv), "--epsilon", "0.5"]));
    let groups = summary["groups"].as_array().unwrap();
    assert_eq!(groups.len(), 2);
    assert_eq!(groups[0]["algorithm"], "vrql");
    assert_eq!(groups[0]["trials"], 3);
}

#[test]
fn invalid_mdp_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let doc = json!({"num_states": 1, "num_actions": 1, "gamma": 0.9, "r_max": 1.0, "reward": [0.5], "kernel": [0.9]});
    std::fs::write(&path, doc.to_string()).unwrap();
    let out = vrql(&["solve", "--mdp", path_str(&path)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    std::fs::write(&path, "{ not json").unwrap();
    assert_eq!(vrql(&["solve", "--mdp", path_str(&path)]).status.code(), Some(2));
}

#[test]
fn bad_parameters_exit_with_validation_code() {
    assert_eq!(vrql(&["plan", "--gamma", "1.5", "--pairs", "3", "--epochs", "2"]).status.code(), Some(2));
    assert_eq!(vrql(&["plan", "--gamma", "0.5", "--pairs", "3"]).status.code(), Some(2));
    assert_eq!(vrql(&["generate", "--kind", "spiral"]).status.code(), Some(2));
    assert_eq!(vrql(&["summarize", "--csv", "x.csv", "--epsilon", "0"]).status.code(), Some(2));
    assert_eq!(vrql(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn missing_files_exit_with_io_code() {
    assert_eq!(vrql(&["solve", "--mdp", "/nonexistent/mdp.json"]).status.code(), Some(3));
    assert_eq!(vrql(&["run", "--spec", "/nonexistent/spec.json"]).status.code(), Some(3));
    assert_eq!(vrql(&["summarize", "--csv", "/nonexistent/t.csv", "--epsilon", "0.1"]).status.code(), Some(3));
    let dir = tempfile::tempdir().unwrap();
    let out = vrql(&["generate", "--kind", "chain", "--out", path_str(&dir.path().join("no/such/dir.json"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn malformed_csv_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    std::fs::write(&path, "a,b,c\n1,2,3\n").unwrap();
    assert_eq!(vrql(&["summarize", "--csv", path_str(&path), "--epsilon", "0.1"]).status.code(), Some(2));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let spec = json!({
        "mdp_source": {"generator": {"kind": {"name": "garnet", "branching": 2}, "num_states": 5, "num_actions": 2, "r_max": 1.0, "seed": 9}},
        "algorithms": [{"type": "vrql", "num_epochs": 2, "c1": 0.1, "c2": 0.1}, {"type": "oracle_vr", "num_epochs": 2, "epoch_length": 30}],
        "gammas": [0.6, 0.9],
        "trials": 5,
        "base_seed": 42,
        "output_path": "ignored.csv",
        "record_inner": true,
        "workers": 2
    });
    let spec_path = dir.path().join("spec.json");
    std::fs::write(&spec_path, spec.to_string()).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = vrql(&["run", "--spec", path_str(&spec_path), "--output", path_str(&out)]);
        assert!(status.status.success());
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}
