use std::path::PathBuf;
use std::process::{Command, Output};

fn problems() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../problems")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delay-ift"))
        .args(args)
        .current_dir(problems())
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("json report")
}

#[test]
fn check_exit_codes_follow_the_verdict() {
    assert_eq!(code(&run(&["check", "intro_a.check"])), 0);
    assert_eq!(code(&run(&["check", "intro_b.check"])), 0);
    assert_eq!(code(&run(&["check", "intro_c.check"])), 2);
    assert_eq!(code(&run(&["check", "remark2.check"])), 2);
}

#[test]
fn check_prints_the_explicit_solution() {
    let o = run(&["check", "intro_a.check", "--json"]);
    let j = json(&o);
    assert_eq!(j["verdict"], "YES");
    assert_eq!(j["explicit"][0]["var"], "x1");
    assert_eq!(j["explicit"][0]["expr"], "(-x2*x2[-1] - e1)/x2[-1]");
    assert_eq!(j["certificate"]["verified"], true);
}

#[test]
fn empty_equation_list_is_a_usage_error() {
    let o = run(&["check", "index0.ddae"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no `eq` lines"));
    assert_eq!(code(&run(&["check"])), 1);
    assert_eq!(code(&run(&["check", "missing.check"])), 1);
}

#[test]
fn reports_are_byte_identical_across_runs() {
    for args in [
        ["check", "intro_b.check", "--json"],
        ["reduce", "example2.ddae", "--json"],
        ["check", "intro_c.check", "--json"],
    ] {
        let a = run(&args);
        let b = run(&args);
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn several_files_give_an_array_and_the_worst_code() {
    let o = run(&["check", "intro_a.check", "intro_c.check", "--json"]);
    assert_eq!(code(&o), 2);
    let j = json(&o);
    assert_eq!(j.as_array().map(|a| a.len()), Some(2));
    assert_eq!(j[1]["file"], "intro_c.check");
}

#[test]
fn reduce_reports_the_neutral_system() {
    let o = run(&["reduce", "example2.ddae", "--json"]);
    assert_eq!(code(&o), 0);
    let j = json(&o);
    assert_eq!(j["k_star"], 2);
    assert_eq!(j["classification"], "Neutral");
    assert_eq!(j["unique"], true);
    assert_eq!(j["steps"][0]["f2"][0], "x2[-1]*x3 + x1[-1] - ln(c)");
}

#[test]
fn reduce_passes_index_zero_through() {
    let j = json(&run(&["reduce", "index0.ddae", "--json"]));
    assert_eq!(j["k_star"], 0);
    assert_eq!(j["classification"], "Retarded");
}

#[test]
fn constraint_violation_exits_with_two() {
    let o = run(&["reduce", "violation.ddae", "--json"]);
    assert_eq!(code(&o), 2);
    let j = json(&o);
    assert_eq!(j["verdict"], "NO");
    assert_eq!(j["witness"]["kind"], "no_causal_pair");
}

#[test]
fn emitted_reduced_system_reclassifies_identically() {
    let dir = tempfile::tempdir().unwrap();
    let emitted = dir.path().join("reduced.ddae");
    let first = json(&run(&["reduce", "example2.ddae", "--json", "--emit", emitted.to_str().unwrap()]));
    let second = json(&run(&["reduce", emitted.to_str().unwrap(), "--json"]));
    assert_eq!(second["k_star"], 0);
    assert_eq!(second["classification"], first["classification"]);
    assert_eq!(second["unique"], first["unique"]);
    assert_eq!(second["reduced"]["f"], first["reduced"]["f"]);
    assert_eq!(second["reduced"]["e"], first["reduced"]["e"]);
}

#[test]
fn solve_writes_the_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let o = run(&["solve", "example2.ddae", "--json", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let j = json(&o);
    assert!(j["residual"]["max"].as_f64().unwrap() < 1e-6);
    let csv = std::fs::read_to_string(out).unwrap();
    assert!(csv.starts_with("t,x1,x2,x3,x4,dx1,dx2,dx3,dx4\n"));
}

#[test]
fn still_system_gives_a_constant_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let o = run(&["solve", "still.ddae", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(out).unwrap();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1].parse::<f64>().unwrap(), 3.0);
    }
}

#[test]
fn short_history_is_a_coverage_error() {
    let o = run(&["solve", "example2.ddae", "--history-length", "1"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("needed"));
}

#[test]
fn trace_lists_algorithm_lines() {
    let o = run(&["check", "intro_b.check", "--trace"]);
    assert!(stdout(&o).contains("line "));
}
