//! The `ethsim` binary: exit codes, output files and reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.json"))
}

fn ethsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ethsim"))
        .args(args)
        .env_remove("ETHSIM_MAX_DIM")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const MINIMAL: &str = r#"{
  "name": "minimal", "field_dim": 2, "atom_dim": 2, "steps": 1, "trials": 1, "seed": 0,
  "model": {"kind": "explicit", "unitary": [
    [[1,0],[0,0],[0,0],[0,0]], [[0,0],[1,0],[0,0],[0,0]],
    [[0,0],[0,0],[1,0],[0,0]], [[0,0],[0,0],[0,0],[1,0]]]}
}"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn bundled_scenarios_validate() {
    let paths: Vec<PathBuf> = ["unitary", "weak", "strong", "detector", "thermal", "tree"]
        .iter()
        .map(|n| scenario(n))
        .collect();
    let mut args = vec!["validate", "--scenario"];
    args.extend(paths.iter().map(|p| p.to_str().unwrap()));
    let o = ethsim(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn invalid_scenario_exits_2_with_every_path() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
      "name": "bad", "field_dim": 2, "atom_dim": 2, "steps": 2, "trials": 0, "seed": 0,
      "model": {"kind": "measurement",
        "field_unitaries": [[[[1,0],[0,0]],[[0,0],[1,0]]], [[[1,0],[0,0]],[[0,0],[1,0]]]],
        "partition": [[[[1,0],[0,0]],[[0,0],[0,0]]],
                      [[[0,0],[0,0],[0,0]],[[0,0],[1,0],[0,0]],[[0,0],[0,0],[0,0]]]]},
      "initial_state": {"kind": "basis", "index": 3}
    }"#;
    let p = write(dir.path(), "bad.json", text);
    let o = ethsim(&["validate", "--scenario", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    for path in ["trials", "model.partition[1]", "initial_state.index"] {
        assert!(err.contains(&format!("{path}:")), "missing {path} in {err}");
    }
    // run refuses the same file with the same code
    let o = ethsim(&[
        "run",
        "--scenario",
        p.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn malformed_json_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "broken.json", "{\"name\": ");
    let o = ethsim(&["validate", "--scenario", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 1"));
}

#[test]
fn minimal_scenario_runs() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "minimal.json", MINIMAL);
    let out = dir.path().join("out");
    let o = ethsim(&["run", "--scenario", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let log = std::fs::read_to_string(out.join("trajectories.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 1);
    let line: serde_json::Value = serde_json::from_str(log.trim()).unwrap();
    assert_eq!(line["trial"], 1);
    assert_eq!(line["step"], 1);
    assert_eq!(line["field_index"], 1);
    assert_eq!(line["branch"], 1);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["per_step"].as_array().unwrap().len(), 1);
    assert_eq!(report["per_step"][0]["min_fidelity_to_free"], 1.0);
}

#[test]
fn zero_steps_give_an_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "zero.json",
        &MINIMAL.replace("\"steps\": 1", "\"steps\": 0"),
    );
    let out = dir.path().join("out");
    let o = ethsim(&["run", "--scenario", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["per_step"].as_array().unwrap().len(), 0);
    assert_eq!(std::fs::read_to_string(out.join("trajectories.jsonl")).unwrap(), "");
}

#[test]
fn oracle_passes_and_respects_the_cap() {
    let p = scenario("tree");
    let o = ethsim(&["oracle", "--scenario", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("max diff"));
    let o = Command::new(env!("CARGO_BIN_EXE_ethsim"))
        .args(["oracle", "--scenario", p.to_str().unwrap()])
        .env("ETHSIM_MAX_DIM", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn tree_writes_a_consistent_document() {
    let dir = tempfile::tempdir().unwrap();
    let p = scenario("tree");
    let o = ethsim(&[
        "tree",
        "--scenario",
        p.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--depth",
        "2",
        "--prune",
        "0",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("tree.json")).unwrap()).unwrap();
    assert_eq!(doc["depth"], 2);
    assert!(doc["consistency_violation"].as_f64().unwrap() <= 1e-10);
    let nodes = doc["nodes"].as_array().unwrap();
    let leaf_mass: f64 = nodes
        .iter()
        .filter(|n| n["depth"] == 2)
        .map(|n| n["cumulative"].as_f64().unwrap())
        .sum();
    assert!((leaf_mass - 1.0).abs() < 1e-12);
}

#[test]
fn tree_rejects_thermal_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let p = scenario("thermal");
    let o = ethsim(&[
        "tree",
        "--scenario",
        p.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn logs_are_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let p = scenario("thermal");
    let mut logs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(threads);
        let o = ethsim(&[
            "--threads",
            threads,
            "run",
            "--scenario",
            p.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--trials",
            "300",
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        logs.push(std::fs::read(out.join("trajectories.jsonl")).unwrap());
    }
    assert!(!logs[0].is_empty());
    assert!(logs[0] == logs[1]);
}

#[test]
fn seed_flag_changes_the_sample() {
    let dir = tempfile::tempdir().unwrap();
    let p = scenario("tree");
    let mut logs = Vec::new();
    for seed in ["1", "2"] {
        let out = dir.path().join(seed);
        let o = ethsim(&[
            "run",
            "--scenario",
            p.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        logs.push(std::fs::read(out.join("trajectories.jsonl")).unwrap());
    }
    assert!(logs[0] != logs[1]);
}

#[test]
fn regimes_writes_its_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let p = scenario("strong");
    let o = ethsim(&[
        "regimes",
        "--scenario",
        p.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--trials",
        "500",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let tv = std::fs::read_to_string(dir.path().join("tv_distance.csv")).unwrap();
    assert!(tv.starts_with("step,samples,tv_distance,ambiguous_fraction\n"));
    assert_eq!(tv.lines().count(), 12);
    assert!(dir.path().join("regimes.json").exists());
}
