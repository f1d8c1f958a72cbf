use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_stochlq");

fn scalar(a: f64, c: f64, b: f64, d: f64, q: f64, s: f64, r: f64) -> String {
    format!(r#"{{"n":1,"m":1,"A":[[{a}]],"C":[[{c}]],"B":[[{b}]],"D":[[{d}]],"Q":[[{q}]],"S":[[{s}]],"R":[[{r}]]}}"#)
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("report is JSON")
}

#[test]
fn check_reports_unit_gain() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "p.json", &scalar(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0));
    let out = run(&["check", &f]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let g = r["stabilizability"]["Gamma"][0][0].as_f64().unwrap();
    assert!((g + 1.0).abs() < 1e-8, "Gamma = {g}");
    assert!((r["stabilizability"]["P"][0][0].as_f64().unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn check_without_control_on_unstable_system() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "p.json", &scalar(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0));
    assert_eq!(run(&["check", &f]).status.code(), Some(2));
}

#[test]
fn misshapen_q_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"n":2,"m":1,"A":[[0,0],[0,0]],"C":[[0,0],[0,0]],"B":[[1],[1]],"D":[[0],[0]],
        "Q":[[1]],"S":[[0,0]],"R":[[1]]}"#;
    let f = write(dir.path(), "p.json", text);
    let out = run(&["check", &f]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension mismatch: Q"));
    assert!(out.stdout.is_empty());
}

#[test]
fn malformed_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "p.json", "{\"n\": 1,");
    assert_eq!(run(&["solve", &f]).status.code(), Some(1));
    assert_eq!(run(&["solve", "/nonexistent/problem.json"]).status.code(), Some(1));
}

#[test]
fn solve_agrees_with_oracle() {
    let dir = tempfile::tempdir().unwrap();
    // D = 0, R > 0 with positive discriminant.
    let f = write(dir.path(), "p.json", &scalar(0.5, 0.4, 1.0, 0.0, 1.0, 0.2, 0.5));
    let out = run(&["solve", &f, "--oracle"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["verdict"]["oracle_agrees"], Value::Bool(true));
    let p = r["gare"]["P"][0][0].as_f64().unwrap();
    let po = r["oracle1d"]["result"]["p"].as_f64().unwrap();
    assert!((p - po).abs() <= 1e-6 * (1.0 + p.abs()));
}

#[test]
fn solve_reports_unsolvable() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "p.json", &scalar(-1.0, 0.0, 1.0, 0.0, -2.0, 0.0, 1.0));
    let out = run(&["solve", &f, "--oracle"]);
    assert_eq!(out.status.code(), Some(3));
    let r = report(&out);
    assert_eq!(r["verdict"]["solvable"], Value::Bool(false));
    assert_eq!(r["verdict"]["oracle_agrees"], Value::Bool(true));
}

#[test]
fn solve_reports_not_stabilizable() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "p.json", &scalar(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0));
    assert_eq!(run(&["solve", &f]).status.code(), Some(2));
}

#[test]
fn solve_is_deterministic_and_writes_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "p.json", &scalar(-0.5, 0.3, 1.0, 0.5, 1.0, 0.0, 1.0));
    let o1 = dir.path().join("r1.json");
    let o2 = dir.path().join("r2.json");
    for o in [&o1, &o2] {
        let out = run(&["solve", &f, "--simulate", "500", "--oracle", "--out", o.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        assert!(out.stdout.is_empty());
    }
    assert_eq!(std::fs::read(&o1).unwrap(), std::fs::read(&o2).unwrap());
}

#[test]
fn echoed_problem_resolves_to_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"n":1,"m":1,"A":[[-1]],"C":[[0.3]],"B":[[1]],"D":[[0.5]],"Q":[[1]],"S":[[0]],"R":[[1]],
        "inhomogeneity":{"grid":[0,0.5,1],"b":[[1],[-0.5]]}}"#;
    let f = write(dir.path(), "p.json", text);
    let first = run(&["solve", &f, "--tol", "1e-7", "--seed", "3"]);
    assert_eq!(first.status.code(), Some(0));
    let echo = report(&first)["problem"].to_string();
    let g = write(dir.path(), "echo.json", &echo);
    let second = run(&["solve", &g]);
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn eps_schedule_flag_sets_path() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "p.json", &scalar(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0));
    let out = run(&["solve", &f, "--eps-schedule", "1e-2,1e-4,1e-6"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let eps: Vec<f64> = r["gare"]["epsilon_path"].as_array().unwrap().iter().map(|s| s["epsilon"].as_f64().unwrap()).collect();
    assert_eq!(eps, vec![1e-2, 1e-4, 1e-6]);
}

#[test]
fn simulate_rejects_non_stabilizing_gain() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "p.json", &scalar(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0));
    let out = run(&["simulate", &f, "--theta", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let r = report(&out);
    assert_eq!(r["lyapunov"]["certificate_found"], Value::Bool(false));
}

#[test]
fn simulate_supplied_gain() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "p.json", &scalar(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0));
    let out = run(&["simulate", &f, "--theta", "-2", "--paths", "200"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    // J = (1 + 4) / 4 for u = −2X, dX = −2X dt.
    let j = r["simulation"]["result"]["estimate"].as_f64().unwrap();
    assert!((j - 1.25).abs() < 0.01, "{j}");
}

#[test]
fn simulate_from_zero_state_costs_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let text = scalar(-1.0, 0.5, 1.0, 0.2, 1.0, 0.0, 1.0).replace(r#""R":[[1]]"#, r#""R":[[1]],"x0":[0]"#);
    let f = write(dir.path(), "p.json", &text);
    let out = run(&["simulate", &f, "--paths", "100"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["simulation"]["result"]["estimate"].as_f64(), Some(0.0));
}

#[test]
fn simulate_optimal_matches_value() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "p.json", &scalar(-0.5, 0.3, 1.0, 0.5, 1.0, 0.0, 1.0));
    let out = run(&["simulate", &f, "--paths", "4000"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let v = r["V(x0)"].as_f64().unwrap();
    let sim = &r["simulation"]["result"];
    let (j, se) = (sim["estimate"].as_f64().unwrap(), sim["std_error"].as_f64().unwrap());
    assert!((j - v).abs() <= 3.0 * se + 0.005 * v.abs(), "J = {j}, SE = {se}, V = {v}");
}

#[test]
fn oracle1d_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (scalar(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0), 0),
        (scalar(-1.0, 0.0, 1.0, 0.0, -2.0, 0.0, 1.0), 3),
        (scalar(1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0), 2),
        (scalar(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0), 1),
    ];
    for (i, (text, code)) in cases.iter().enumerate() {
        let f = write(dir.path(), &format!("p{i}.json"), text);
        assert_eq!(run(&["oracle1d", &f]).status.code(), Some(*code), "case {i}");
    }
    let two = r#"{"n":2,"m":1,"A":[[0,0],[0,0]],"C":[[0,0],[0,0]],"B":[[1],[1]],"D":[[0],[0]],
        "Q":[[1,0],[0,1]],"S":[[0,0]],"R":[[1]]}"#;
    let f = write(dir.path(), "two.json", two);
    assert_eq!(run(&["oracle1d", &f]).status.code(), Some(1));
}

#[test]
fn reports_contain_only_finite_numbers() {
    fn walk(v: &Value) {
        match v {
            Value::Null => panic!("null entry in report"),
            Value::Number(n) => assert!(n.as_f64().unwrap().is_finite()),
            Value::Array(a) => a.iter().for_each(walk),
            Value::Object(o) => o.values().for_each(walk),
            _ => {}
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "p.json", &scalar(-0.5, 0.3, 1.0, 0.5, 1.0, 0.0, 1.0));
    walk(&report(&run(&["solve", &f, "--simulate", "200", "--oracle"])));
}
