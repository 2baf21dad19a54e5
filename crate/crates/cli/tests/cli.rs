use std::path::Path;
use std::process::{Command, Output};

use ctjmdp::files;
use ctjmdp_core::catalog;
use ctjmdp_core::MarkovPolicyGrid;

fn ctjmdp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctjmdp"))
        .current_dir(dir)
        .env_remove("CTJMDP_THREADS")
        .args(args)
        .output()
        .unwrap()
}

/// Figure-two model, parity policy, constant-`b` and constant-`c` Markov policies, start in `2`.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let model = catalog::figure_two();
    std::fs::write(d.join("model.json"), files::model_json(&model)).unwrap();
    let parity = files::finite_memory_policy_file(&model, &catalog::parity_policy(&model));
    std::fs::write(d.join("parity.json"), files::json_string(&parity)).unwrap();
    for (name, action) in [("b", 0), ("c", 1)] {
        let phi = MarkovPolicyGrid::deterministic(&model, &[0, action]).unwrap();
        let file = files::markov_policy_file(&model, &phi);
        std::fs::write(d.join(format!("{name}.json")), files::json_string(&file)).unwrap();
    }
    std::fs::write(d.join("gamma.json"), "[0.0, 1.0]").unwrap();
    dir
}

const INPUTS: [&str; 4] = ["--model", "model.json", "--gamma", "gamma.json"];

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = workspace();
    assert_eq!(ctjmdp(dir.path(), &["frobnicate"]).status.code(), Some(64));
    assert_eq!(ctjmdp(dir.path(), &["forward", "--grid-step", "0.1"]).status.code(), Some(64));
    assert_eq!(ctjmdp(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn forward_under_constant_b_keeps_all_mass() {
    let dir = workspace();
    let mut args = vec!["forward", "--policy", "b.json", "--grid-step", "0.01", "--horizon", "3", "--out", "curve.csv"];
    args.extend(INPUTS);
    let out = ctjmdp(dir.path(), &args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("time,state,probability,mass_defect"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            vec![f[0].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().unwrap()]
        })
        .collect();
    assert_eq!(rows.len(), 301 * 2);
    for pair in rows.chunks(2) {
        let t = pair[0][0];
        assert_eq!(pair[0][2], pair[1][2]);
        assert!(pair[0][2].abs() <= 1e-12);
        // both states leave at rate 2: P(t, 1) = (1 - e^{-4t}) / 2 from state 2
        assert!((pair[0][1] - 0.5 * (1.0 - (-4.0 * t).exp())).abs() <= 1e-8, "t {t}");
    }
}

#[test]
fn verify_failure_exits_two_and_still_writes_the_report() {
    let dir = workspace();
    let mut args = vec![
        "verify", "--policy", "b.json", "--phi", "c.json", "--grid-step", "0.05", "--horizon", "2", "--out", "report.json",
    ];
    args.extend(INPUTS);
    let out = ctjmdp(dir.path(), &args);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "VERIFICATION_FAILED");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report["violation_sup"].as_f64().unwrap() > 1e-6);
    assert_eq!(report["passed"], false);

    // the exact Markovization of the parity policy passes
    let mut args = vec!["verify", "--policy", "parity.json", "--grid-step", "0.01", "--horizon", "2", "--refine", "5"];
    args.extend(INPUTS);
    let out = ctjmdp(dir.path(), &args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["equality_sup"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn invalid_inputs_exit_one_with_a_structured_error() {
    let dir = workspace();
    std::fs::write(dir.path().join("bad_gamma.json"), "[0.5, 0.6]").unwrap();
    let out = ctjmdp(
        dir.path(),
        &["evaluate", "--model", "model.json", "--policy", "b.json", "--gamma", "bad_gamma.json", "--alpha", "1", "--infinite"],
    );
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "BAD_DIST");
    let out = ctjmdp(
        dir.path(),
        &["evaluate", "--model", "missing.json", "--policy", "b.json", "--gamma", "gamma.json", "--alpha", "1", "--infinite"],
    );
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "IO");
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = workspace();
    let run = |threads: &str| {
        let mut args = vec!["simulate", "--policy", "parity.json", "--horizon", "5", "--n", "300", "--seed", "3", "--threads", threads];
        args.extend(INPUTS);
        let out = ctjmdp(dir.path(), &args);
        assert_eq!(out.status.code(), Some(0));
        out.stdout
    };
    let serial = run("1");
    assert_eq!(serial, run("8"));
    let text = String::from_utf8(serial).unwrap();
    assert!(text.starts_with("trajectory_id,jump_index,time,state,status\n0,0,"));
}
