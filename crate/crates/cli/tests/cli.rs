//! End-to-end runs of the `ddm` binary against the shared fixtures.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn ddm(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddm"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn success(args: &[&str], out: &Path) -> Value {
    let o = ddm(args, out);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("summary is JSON")
}

fn failure(args: &[&str], out: &Path) -> Value {
    let o = ddm(args, out);
    assert!(!o.status.success(), "{args:?} unexpectedly succeeded");
    assert!(o.stdout.is_empty());
    serde_json::from_slice(&o.stderr).expect("error is JSON")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|_| panic!("{name} was written"))
}

fn corridor() -> String {
    fixture("corridor.json").display().to_string()
}

#[test]
fn synth_writes_a_normalized_policy() {
    let dir = TempDir::new().unwrap();
    let grid = corridor();
    let summary = success(&["synth", "--grid", &grid], dir.path());
    assert_eq!(summary["command"], "synth");
    assert!((summary["reach_probability"].as_f64().unwrap() - 1.0).abs() < 1e-6);

    let policy: Value = serde_json::from_str(&read(dir.path(), "policy.json")).unwrap();
    let pi = policy["pi"].as_object().unwrap();
    assert!(!pi.is_empty());
    for (state, row) in pi {
        let total: f64 = row.as_object().unwrap().values().map(|p| p.as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9, "{state}: {total}");
    }
    assert_eq!(policy["v_star"], summary["v_star"]);

    let cost = read(dir.path(), "cost.csv");
    assert!(cost.starts_with("state,action,g\n"));
    let written: Value = serde_json::from_str(&read(dir.path(), "summary.json")).unwrap();
    assert_eq!(written, summary);
}

#[test]
fn synth_output_is_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let grid = corridor();
    success(&["synth", "--grid", &grid], a.path());
    success(&["synth", "--grid", &grid], b.path());
    for name in ["policy.json", "cost.csv", "summary.json"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

#[test]
fn simulate_reuses_a_saved_policy_and_honours_the_seed() {
    let dir = TempDir::new().unwrap();
    let grid = corridor();
    success(&["synth", "--grid", &grid], dir.path());
    let policy = dir.path().join("policy.json").display().to_string();

    let run = |seed: &str, out: &Path| {
        let args = ["simulate", "--grid", &grid, "--policy", &policy, "--rollouts", "20", "--seed", seed];
        let summary = success(&args, out);
        (summary, read(out, "trajectories.json"))
    };
    let first = TempDir::new().unwrap();
    let second = TempDir::new().unwrap();
    let (summary, trajectories) = run("11", first.path());
    let (_, again) = run("11", second.path());
    assert_eq!(trajectories, again);
    assert_eq!(summary["rollouts"], 20);
    assert!((summary["reach_frequency"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let parsed: Value = serde_json::from_str(&trajectories).unwrap();
    let list = parsed.as_array().unwrap();
    assert_eq!(list.len(), 20);
    for t in list {
        let states = t["states"].as_array().unwrap();
        assert_eq!(states[0], "2_0");
        assert_eq!(states.len(), t["actions"].as_array().unwrap().len() + 1);
    }
}

#[test]
fn predict_rows_are_distributions() {
    let dir = TempDir::new().unwrap();
    success(&["predict", "--grid", &corridor()], dir.path());
    let csv = read(dir.path(), "posteriors.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("state,0_5,4_5"));
    let mut rows = 0;
    for line in lines {
        let total: f64 = line.split(',').skip(1).map(|x| x.parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9, "{line}");
        rows += 1;
    }
    assert!(rows > 0);
}

#[test]
fn eval_and_baseline_write_their_reports() {
    let dir = TempDir::new().unwrap();
    let grid = corridor();
    let summary = success(&["eval", "--grid", &grid, "--source", "shortest"], dir.path());
    assert_eq!(summary["fractions"].as_array().unwrap().len(), 4);
    assert!(read(dir.path(), "segments.csv").lines().count() > 1);
    assert!(read(dir.path(), "segment_summary.csv").lines().count() > 1);

    let summary = success(&["baseline", "--grid", &grid], dir.path());
    assert_eq!(summary["shortest_length"], 7);
    assert_eq!(summary["decoy"], "4_5");
    for name in ["shortest.json", "dpp.json", "dpp_turnback.json"] {
        let t: Value = serde_json::from_str(&read(dir.path(), name)).unwrap();
        assert!(t["states"].as_array().is_some_and(|s| !s.is_empty()), "{name}");
    }
}

#[test]
fn product_synth_meets_the_on_time_threshold() {
    let dir = TempDir::new().unwrap();
    let network = fixture("twocity.csv").display().to_string();
    let args = [
        "product-synth", "--network", &network, "--start", "n00", "--goal", "n40", "--goal", "n23",
        "--true-goal", "n40", "--tmax", "28", "--threshold", "0.8",
    ];
    let summary = success(&args, dir.path());
    assert!(summary["on_time_probability"].as_f64().unwrap() >= 0.8 - 1e-6);
    assert!(summary["max_on_time_probability"].as_f64().unwrap() >= 0.8);
    let policy: Value = serde_json::from_str(&read(dir.path(), "product_policy.json")).unwrap();
    assert!(policy["pi"].as_object().is_some_and(|m| !m.is_empty()));
}

#[test]
fn unattainable_budget_reports_a_structured_error() {
    let dir = TempDir::new().unwrap();
    let network = fixture("twocity.csv").display().to_string();
    let args = [
        "product-synth", "--network", &network, "--start", "n00", "--goal", "n40", "--goal", "n23",
        "--true-goal", "n40", "--tmax", "20", "--threshold", "0.5",
    ];
    let err = failure(&args, dir.path());
    assert_eq!(err["error"]["module"], "product-mdp");
    assert_eq!(err["error"]["code"], "infeasible");
    let achievable = err["error"]["details"]["achievable"].as_f64().unwrap();
    assert!(achievable < 0.5);
    assert!(!dir.path().join("product_policy.json").exists());
}

#[test]
fn missing_input_fails_with_json_on_stderr() {
    let dir = TempDir::new().unwrap();
    let err = failure(&["synth", "--grid", "does-not-exist.json"], dir.path());
    assert_eq!(err["error"]["code"], "io_error");
    assert!(err["error"]["message"].as_str().unwrap().contains("does-not-exist.json"));
}

#[test]
fn malformed_policy_is_rejected() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("policy.json");
    std::fs::write(&bad, r#"{"states": [], "actions": [], "pi": {"2_0": {"up": 0.7}}}"#).unwrap();
    let bad = bad.display().to_string();
    let err = failure(&["simulate", "--grid", &corridor(), "--policy", &bad], dir.path());
    assert!(err["error"]["code"].is_string());
    assert!(!dir.path().join("trajectories.json").exists());
}
