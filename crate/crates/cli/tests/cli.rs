use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hodge-lab")).args(args).output().expect("binary runs")
}

fn report(args: &[&str]) -> Value {
    let out = lab(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hodge-lab-tests-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn dims_for_sl2_genus_two() {
    let r = report(&["dims", "--n", "2", "--g", "2"]);
    assert_eq!(r["betti"], 6);
    assert_eq!(r["hitchin_base"], 3);
    assert_eq!(r["config"]["command"], "dims");
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn hn_verify_reports_maximal_oper() {
    let r = report(&["hn", "verify", "--n", "2", "--g", "2"]);
    assert_eq!(r["types"], 1);
    assert_eq!(r["maximal"], true);
}

#[test]
fn bad_input_exits_with_two() {
    assert_eq!(lab(&[]).status.code(), Some(2));
    assert_eq!(lab(&["dims", "--steps", "3"]).status.code(), Some(2));
    assert_eq!(lab(&["dims", "--bogus"]).status.code(), Some(2));
    assert_eq!(lab(&["dims", "--csv", scratch("none.csv").to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(lab(&["oper", "monodromy", "--z0", "0.1,-1"]).status.code(), Some(2));
    assert_eq!(lab(&["oper", "eichler", "--n", "4"]).status.code(), Some(2));
    assert_eq!(lab(&["suite", "--level", "huge"]).status.code(), Some(2));
    assert_eq!(lab(&["harmonic", "solve", "--rep", "diagonal", "--n", "3"]).status.code(), Some(2));
}

#[test]
fn version_flag_succeeds() {
    let out = lab(&["--version"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn reports_are_byte_identical_across_runs_and_threads() {
    let args = ["gauge", "flow", "--steps", "20", "--seed", "11"];
    let mut files = Vec::new();
    for (i, threads) in ["1", "1", "2"].into_iter().enumerate() {
        let path = scratch(&format!("flow{i}.json"));
        let mut a = args.to_vec();
        a.extend(["--threads", threads, "--out", path.to_str().unwrap()]);
        assert!(lab(&a).status.success());
        files.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[0], files[2]);
}

#[test]
fn echoed_config_reproduces_the_run() {
    let first = report(&["oper", "wk", "--n", "5"]);
    let cfg = scratch("wk.json");
    std::fs::write(&cfg, first["config"].to_string()).unwrap();
    let second = report(&["oper", "wk", "--config", cfg.to_str().unwrap()]);
    assert_eq!(first, second);

    let overridden = report(&["oper", "wk", "--config", cfg.to_str().unwrap(), "--n", "3"]);
    assert_eq!(overridden["config"]["n"], 3);
}

#[test]
fn config_for_another_command_is_rejected() {
    let cfg = scratch("dims.json");
    std::fs::write(&cfg, r#"{"command": "dims", "n": 3}"#).unwrap();
    assert_eq!(lab(&["hn", "verify", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(&cfg, r#"{"n": 3, "colour": "red"}"#).unwrap();
    assert_eq!(lab(&["dims", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn flow_trace_is_written_as_csv() {
    let csv = scratch("flow.csv");
    let out = lab(&["gauge", "flow", "--steps", "5", "--csv", csv.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,ymh,j,mu1_norm,mu2_norm,mu3_norm,dt"));
    assert_eq!(lines.count(), 6);
}

#[test]
fn flow_decreases_the_functional() {
    let r = report(&["gauge", "flow", "--steps", "40"]);
    assert_eq!(r["monotone"], true);
    assert!(r["final"]["ymh"].as_f64().unwrap() < r["initial"]["ymh"].as_f64().unwrap());
}

#[test]
fn unipotent_datum_is_flagged_divergent() {
    let r = report(&["harmonic", "solve", "--rep", "unipotent", "--refinement", "1", "--slope", "1e-4"]);
    assert_eq!(r["diverged"], true);
    assert_eq!(r["converged"], false);
}

#[test]
fn unwritable_output_exits_with_three() {
    let out = lab(&["dims", "--out", "/nonexistent-dir/report.json"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn suite_detects_a_wrong_w4_constant() {
    let path = scratch("suite.json");
    let out = lab(&["suite", "--perturb", "wrong-w4-constant", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("criterion  4"));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let c4 = r["criteria"].as_array().unwrap().iter().find(|c| c["id"] == 4).unwrap();
    let failed: Vec<&str> = c4["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["passed"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(failed.iter().any(|n| n.starts_with("w4")), "{failed:?}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("failed criteria"));
}
