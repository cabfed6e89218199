use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn reference_file() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/reference.json")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adagroup")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(args: &[&str]) -> (Value, i32) {
    let mut all = args.to_vec();
    all.extend(["--format", "json"]);
    let o = run(&all);
    let v = serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("bad JSON ({e}): {}", stdout(&o)));
    (v, o.status.code().unwrap())
}

fn write_instance(dir: &tempfile::TempDir, name: &str, body: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn repro_paper_passes() {
    let o = run(&["repro-paper"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.contains("gap = 6/5"));
    assert!(!out.contains("FAIL"));
}

#[test]
fn audit_reports_overlap_on_reference() {
    let file = reference_file();
    let (v, code) = json(&["audit", file.to_str().unwrap(), "--x", "23/25"]);
    assert_eq!(code, 0);
    assert_eq!(v["command"], "audit");
    assert_eq!(v["instance_digest"].as_str().unwrap().len(), 64);
    let r = &v["results"];
    assert_eq!(r["verdict"]["verdict"], "overlap");
    assert_eq!(r["verdict"]["first"], "b");
    assert_eq!(r["verdict"]["second"], "c");
    assert_eq!(r["report"]["overlap_weighted_sum"], "18/5");
    assert_eq!(r["report"]["reference_c_avg"], "12/5");
    assert_eq!(r["report"]["gap"], "6/5");
    assert_eq!(r["report"]["total_stop_mass"], "7/5");
    let names: Vec<&str> = r["stop_nodes"].as_array().unwrap().iter().map(|n| n["node"].as_str().unwrap()).collect();
    assert_eq!(names, ["b", "g", "c"]);
}

#[test]
fn audit_against_cost_file() {
    let dir = tempfile::tempdir().unwrap();
    let costs = write_instance(
        &dir,
        "costs.json",
        r#"{"phi1": "1", "phi2": "1", "phi3": "1", "phi4": "1", "phi5": "1"}"#,
    );
    let file = reference_file();
    let (v, code) = json(&["audit", file.to_str().unwrap(), "--x", "23/25", "--reference", &costs]);
    assert_eq!(code, 0);
    assert_eq!(v["results"]["report"]["overlap_weighted_sum"], "7/5");
    assert_eq!(v["results"]["report"]["gap"], "2/5");

    let partial = write_instance(&dir, "partial.json", r#"{"phi1": "1"}"#);
    let o = run(&["audit", file.to_str().unwrap(), "--x", "23/25", "--reference", &partial]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no cost for phi2"));
}

#[test]
fn audit_below_root_has_no_stop_node() {
    let o = run(&["audit", reference_file().to_str().unwrap(), "--x", "1/25"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no stop node: x ≤ f_E(root)"));
}

#[test]
fn greedy_writes_named_dot() {
    let dir = tempfile::tempdir().unwrap();
    let dot = dir.path().join("tree.dot");
    let o = run(&["greedy", reference_file().to_str().unwrap(), "--dot", dot.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("c_avg = 12/5"));
    let text = fs::read_to_string(dot).unwrap();
    assert!(text.starts_with("digraph policy {"));
    assert!(text.contains(r#"n0 [label="r: {phi1,phi2,phi3,phi4,phi5}, f_E = 1/25"];"#));
    assert!(text.contains(r#"n0 -> n1 [label="e1 = 0"];"#));
    assert_eq!(text.matches("->").count(), 8);
}

#[test]
fn optimal_and_bound() {
    let file = reference_file();
    let (v, code) = json(&["optimal", file.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(v["results"]["cost"]["c_avg"], "12/5");
    let (b, code) = json(&["bound", file.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(b["results"]["eta"], "3/25");
    assert_eq!(b["results"]["bound_satisfied"], true);
}

#[test]
fn check_finds_nothing_for_group_identification() {
    let o = run(&["check", reference_file().to_str().unwrap(), "--property", "both"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("no violations"));
}

#[test]
fn validation_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad_sum = write_instance(
        &dir,
        "sum.json",
        r#"{"items": [{"id": "e1", "cost": "1"}],
            "realizations": [
              {"id": "a", "prob": "1/2", "class": "x", "obs": {"e1": 0}},
              {"id": "b", "prob": "1/3", "class": "y", "obs": {"e1": 1}}]}"#,
    );
    let o = run(&["validate", &bad_sum]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("priors sum ≠ 1"));

    let ambiguous = write_instance(
        &dir,
        "amb.json",
        r#"{"items": [{"id": "e1", "cost": "1"}],
            "realizations": [
              {"id": "a", "prob": "1/2", "class": "x", "obs": {"e1": 0}},
              {"id": "b", "prob": "1/2", "class": "y", "obs": {"e1": 0}}]}"#,
    );
    let (v, code) = json(&["validate", &ambiguous]);
    assert_eq!(code, 1);
    assert_eq!(v["results"]["valid"], false);
    assert_eq!(v["results"]["issues"][0]["kind"], "class_not_determinable");

    let o = run(&["greedy", &ambiguous]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("class not determinable"));

    let malformed = write_instance(&dir, "bad.json", r#"{"items": []"#);
    assert_eq!(run(&["validate", &malformed]).status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    let file = reference_file();
    assert_eq!(run(&["greedy", file.to_str().unwrap(), "--tie", "sideways"]).status.code(), Some(2));
    assert_eq!(run(&["audit", file.to_str().unwrap(), "--x", "0.9"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn search_is_deterministic_and_writes_findings() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("found");
    let args = ["search", "--count", "5", "--seed", "3", "--inject-reference", "--out", out.to_str().unwrap()];
    let first = run(&args);
    assert!(first.status.success(), "{}", stderr(&first));
    let second = run(&args);
    assert_eq!(stdout(&first), stdout(&second));

    let mut files: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert!(!files.is_empty());
    for f in &files {
        let v: Value = serde_json::from_str(&fs::read_to_string(f).unwrap()).unwrap();
        assert_eq!(v["audit"]["verdict"]["verdict"], "overlap");
        assert!(v["instance"]["realizations"].is_array());
    }
    let head: Value = serde_json::from_str(&fs::read_to_string(&files[0]).unwrap()).unwrap();
    assert_eq!(head["audit"]["index"], 0);
}
