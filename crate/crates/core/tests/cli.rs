use std::f64::consts::PI;
use std::process::Command;

use dichotomic::cli::run_from;
use dichotomic::hierarchy::{markov_joint, PairwiseSpec};
use dichotomic::prob::{ProbabilityVector, TimeGrid};
use dichotomic::quantum::QuantumTrajectoryConfig;
use dichotomic::InterpolationFamily;
use serde_json::Value;

fn run(args: &[&str]) -> (i32, Value) {
    let out = run_from(std::iter::once("dichotomic").chain(args.iter().copied()));
    assert!(
        out.stderr.is_empty() || out.code != 0,
        "stderr: {}",
        out.stderr
    );
    let v = serde_json::from_str(&out.stdout).unwrap_or(Value::Null);
    (out.code, v)
}

fn raw(args: &[&str]) -> dichotomic::cli::Outcome {
    run_from(std::iter::once("dichotomic").chain(args.iter().copied()))
}

#[test]
fn trajectory_rows() {
    let (code, r) = run(&["trajectory", "--t-max", "pi/4", "--steps", "2"]);
    assert_eq!(code, 0);
    assert_eq!(r["verdict"], "pass");
    let rows = r["results"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["t"], 0.0);
    assert_eq!(rows[0]["p1"], 1.0);
    assert_eq!(rows[0]["p2"], 0.0);
    assert_eq!(rows[1]["t_pi"], "1/4");
    assert!((rows[1]["p1"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((rows[1]["p2"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn trajectory_rescaling() {
    let (_, slow) = run(&["trajectory", "--omega", "1"]);
    let (_, fast) = run(&["trajectory", "--omega", "2"]);
    for key in ["uniform", "swap"] {
        let a = slow["results"]["landmarks"][key]["t"].as_f64().unwrap();
        let b = fast["results"]["landmarks"][key]["t"].as_f64().unwrap();
        assert!((b - a / 2.0).abs() < 1e-15);
    }
    let (_, half) = run(&[
        "trajectory",
        "--omega",
        "2",
        "--t-max",
        "pi/4",
        "--steps",
        "11",
    ]);
    let (_, full) = run(&[
        "trajectory",
        "--omega",
        "1",
        "--t-max",
        "pi/2",
        "--steps",
        "11",
    ]);
    let h = half["results"]["rows"].as_array().unwrap();
    let f = full["results"]["rows"].as_array().unwrap();
    for (x, y) in h.iter().zip(f) {
        assert!((x["p1"].as_f64().unwrap() - y["p1"].as_f64().unwrap()).abs() < 1e-12);
    }
}

#[test]
fn trajectory_csv() {
    let out = raw(&[
        "trajectory",
        "--t-max",
        "pi/4",
        "--steps",
        "3",
        "--format",
        "csv",
    ]);
    assert_eq!(out.code, 0);
    let lines: Vec<&str> = out.stdout.lines().collect();
    assert_eq!(lines[0], "t,t_pi,p1,p2");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("0,0,1,0"));
    assert!(lines[2].contains(",1/8,"));
}

#[test]
fn ck_commands() {
    let (code, r) = run(&["ck", "--family", "gillespie", "--grid", "0,pi/8,pi/4"]);
    assert_eq!(code, 1);
    assert_eq!(r["verdict"], "fail");
    assert!((r["results"]["ck"]["worst_residual"].as_f64().unwrap() - 0.25).abs() < 1e-12);

    let (code, r) = run(&[
        "ck",
        "--family",
        "interpolation",
        "--grid",
        "linspace:0:pi/4:50",
    ]);
    assert_eq!(code, 0);
    assert_eq!(r["verdict"], "pass");
    assert_eq!(r["results"]["ck"]["triples_checked"], 19_600);

    let (code, r) = run(&["ck", "--family", "gillespie", "--grid", "0,pi/8"]);
    assert_eq!(code, 0);
    assert_eq!(r["verdict"], "n/a");

    let (code, r) = run(&["ck", "--family", "interpolation", "--grid", "0,pi/8,3pi/8"]);
    assert_eq!(code, 1);
    let w = r["results"]["positivity_failure"]["witness"]
        .as_array()
        .unwrap();
    assert_eq!(w.len(), 2);
    assert!(w[1]["t"].as_f64().unwrap() > PI / 4.0 - 1e-3);
}

#[test]
fn ck_extended_domain_reports_witness() {
    let (code, r) = run(&[
        "ck",
        "--family",
        "interpolation",
        "--grid",
        "0,0.7,1.0",
        "--extended-domain",
    ]);
    assert_eq!(code, 1);
    let failure = &r["results"]["positivity_failure"];
    assert!(failure["error"].as_str().unwrap().contains("positivity"));
    assert_eq!(failure["witness"][0]["t"], 0.7);
    assert_eq!(failure["witness"][1]["t"], 1.0);
}

#[test]
fn invariant_and_interval() {
    let (code, r) = run(&["invariant"]);
    assert_eq!(code, 0);
    assert_eq!(r["results"]["kind"], "unique_point");
    assert!((r["results"]["value"].as_f64().unwrap() - 0.5).abs() <= 1e-9);

    let (code, r) = run(&[
        "invariant",
        "--family",
        "interpolation",
        "--grid",
        "0,pi/16,pi/8",
    ]);
    assert_eq!(code, 0);
    assert_eq!(r["results"]["kind"], "all_of_simplex");

    let (code, r) = run(&["interval", "--grid", "linspace:0:pi/2:1001"]);
    assert_eq!(code, 0);
    assert_eq!(r["verdict"], "n/a");
    let step = r["results"]["grid_step"].as_f64().unwrap();
    let t_star = r["results"]["t_star"]["t"].as_f64().unwrap();
    assert!((t_star - PI / 4.0).abs() <= 2.0 * step);
    assert!(!r["results"]["failure_witness"].is_null());
}

#[test]
fn feasibility_bundled_and_file() {
    let (code, r) = run(&["feasibility"]);
    assert_eq!(code, 1);
    assert_eq!(r["results"]["status"], "infeasible");
    assert!(r["results"]["certificate"]["margin"].as_f64().unwrap() > 0.0);
    assert_eq!(r["results"]["correlation"]["violated"], true);

    let (code, _) = run(&["feasibility", "--expect", "infeasible"]);
    assert_eq!(code, 0);
    let (code, _) = run(&["feasibility", "--expect", "feasible"]);
    assert_eq!(code, 1);

    let grid = TimeGrid::new(vec![0.0, PI / 16.0, PI / 8.0, 3.0 * PI / 16.0]).unwrap();
    let f = InterpolationFamily::quantum(&QuantumTrajectoryConfig::default());
    let chain = markov_joint(&f, &ProbabilityVector::new(0.9, 0.1).unwrap(), &grid).unwrap();
    let spec = PairwiseSpec::from_measure(&chain).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spec.json");
    std::fs::write(&path, spec.to_json()).unwrap();
    let (code, r) = run(&[
        "feasibility",
        "--spec",
        path.to_str().unwrap(),
        "--expect",
        "feasible",
    ]);
    assert_eq!(code, 0);
    assert_eq!(r["results"]["witness_kind"], "markov_chain");
    assert!(
        r["results"]["witness_checks"]["max_closure_residual"]
            .as_f64()
            .unwrap()
            <= 1e-9
    );
    assert!(
        r["results"]["witness_checks"]["spec_deviation"]
            .as_f64()
            .unwrap()
            <= 1e-9
    );
}

#[test]
fn inconsistent_spec_is_a_validation_error() {
    let grid = TimeGrid::new(vec![0.0, PI / 8.0, PI / 4.0]).unwrap();
    let q = QuantumTrajectoryConfig::default();
    let marginals = grid
        .times()
        .iter()
        .map(|t| ProbabilityVector::new(t.cos().powi(2), t.sin().powi(2)).unwrap())
        .collect();
    let spec = PairwiseSpec::from_family_with_marginals(
        &dichotomic::GillespieFamily::new(&q),
        grid,
        marginals,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, spec.to_json()).unwrap();
    let out = raw(&["feasibility", "--spec", path.to_str().unwrap()]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("consistency"));
}

#[test]
fn simulate_is_deterministic() {
    let args = ["simulate", "--n-paths", "20000", "--seed", "5"];
    let a = raw(&args);
    let b = raw(&args);
    assert_eq!(a.code, 0, "{}", a.stdout);
    assert_eq!(a.stdout, b.stdout);
    let r: Value = serde_json::from_str(&a.stdout).unwrap();
    assert!(r["results"]["max_abs_z_checked"].as_f64().unwrap() <= 4.0);

    let csv = raw(&[
        "simulate",
        "--n-paths",
        "10",
        "--seed",
        "5",
        "--format",
        "csv",
    ]);
    assert_eq!(csv.code, 0);
    assert_eq!(csv.stdout.lines().count(), 11);
    assert!(csv
        .stdout
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(1) == Some("1")));
}

#[test]
fn simulate_gillespie_surfaces_disagreement() {
    let (code, r) = run(&[
        "simulate",
        "--family",
        "gillespie",
        "--p0",
        "0.5",
        "--n-paths",
        "40000",
        "--seed",
        "1",
    ]);
    assert_eq!(code, 0);
    assert_eq!(r["results"]["non_consecutive_agrees"], false);
    assert!(r["results"]["max_abs_z_non_consecutive"].as_f64().unwrap() > 4.0);
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = raw(&["invariant", "--out", path.to_str().unwrap()]);
    assert_eq!(out.code, 0);
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["command"], "invariant");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(raw(&["trajectory", "--steps", "1"]).code, 2);
    assert_eq!(raw(&["ck", "--family", "other"]).code, 2);
    assert_eq!(raw(&["ck"]).code, 2);
    assert_eq!(
        raw(&["ck", "--family", "gillespie", "--grid", "0,x"]).code,
        2
    );
    assert_eq!(raw(&["invariant", "--format", "csv"]).code, 2);
    assert_eq!(raw(&["simulate", "--n-paths", "0"]).code, 2);
    assert_eq!(
        raw(&["feasibility", "--spec", "/nonexistent/spec.json"]).code,
        2
    );
    assert_eq!(raw(&["invariant", "--tol", "-1"]).code, 2);
    assert_eq!(raw(&["frobnicate"]).code, 2);
    assert_eq!(raw(&["--help"]).code, 0);
}

#[test]
fn reports_have_stable_shape() {
    let (_, r) = run(&["invariant"]);
    let keys: Vec<&str> = r.as_object().unwrap().keys().map(String::as_str).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(
        sorted,
        ["command", "inputs", "results", "tolerances", "verdict"]
    );
    assert_eq!(r["tolerances"]["tol_exact"], 1e-12);
    let a = raw(&["ck", "--family", "gillespie"]).stdout;
    let b = raw(&["ck", "--family", "gillespie"]).stdout;
    assert_eq!(a, b);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_dichotomic");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap();
    let ok = status(&["invariant"]);
    assert_eq!(ok.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(v["verdict"], "pass");
    assert_eq!(
        status(&["ck", "--family", "gillespie"]).status.code(),
        Some(1)
    );
    assert_eq!(
        status(&["trajectory", "--steps", "0"]).status.code(),
        Some(2)
    );
}

#[test]
fn reproduce_paper_passes() {
    let out = raw(&["reproduce-paper", "--n-paths", "100000", "--seed", "0"]);
    let r: Value = serde_json::from_str(&out.stdout).unwrap();
    for check in r["results"]["checks"].as_array().unwrap() {
        assert_eq!(check["matched"], true, "{}", check["name"]);
    }
    assert_eq!(out.code, 0);
    assert_eq!(r["verdict"], "pass");
}
