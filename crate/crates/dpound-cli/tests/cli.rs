use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dpound_cli::{exit_code, EXIT_ASSERTION, EXIT_OK};
use dpound_sim::engine::{PostconditionReport, Verdict};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn world() -> PathBuf {
    configs().join("world.cfg")
}

fn scenario(name: &str) -> PathBuf {
    configs().join("scenarios").join(format!("{name}.cfg"))
}

fn dpound(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpound")).args(args).env_remove("DPOUND_SANDBOX_OUT").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn run_writes_three_artifacts() {
    let out = tempfile::tempdir().unwrap();
    let o = dpound(&["run", "--world", s(&world()), "--scenario", s(&scenario("u1_standard")), "--out", s(out.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<String> = fs::read_dir(out.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["u1_standard.exposure", "u1_standard.report", "u1_standard.trace"]);
    let report = fs::read_to_string(out.path().join("u1_standard.report")).unwrap();
    assert!(report.ends_with("verdict PASS\n"));
}

#[test]
fn repeated_runs_write_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = dpound(&["run", "--world", s(&world()), "--scenario", s(&scenario("u3_standard")), "--out", s(d.path())]);
        assert_eq!(code(&o), 0);
    }
    for f in ["u3_standard.trace", "u3_standard.report", "u3_standard.exposure"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn missing_binding_exits_1_naming_the_slot() {
    let dir = tempfile::tempdir().unwrap();
    let text: String = fs::read_to_string(world()).unwrap().lines().filter(|l| !l.starts_with("U1.S2")).map(|l| format!("{l}\n")).collect();
    let w = dir.path().join("w.cfg");
    fs::write(&w, text).unwrap();
    let o = dpound(&["run", "--world", s(&w), "--scenario", s(&scenario("u1_standard")), "--out", s(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("U1.S2"));
}

#[test]
fn unknown_flag_is_an_error() {
    let o = dpound(&["run", "--world", s(&world()), "--verbosity", "3"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn failed_assertion_exits_2_and_still_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario("u1_standard")).unwrap().replace("[scenario]", "[script]\nauthorise = reject\n\n[scenario]");
    let sc = dir.path().join("sc.cfg");
    fs::write(&sc, text).unwrap();
    let out = dir.path().join("out");
    let o = dpound(&["run", "--world", s(&world()), "--scenario", s(&sc), "--out", s(&out)]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stdout));
    let report = fs::read_to_string(out.join("u1_standard.report")).unwrap();
    assert!(report.contains("clause FAIL outcome=success"));
}

#[test]
fn matrix_suite_all_checks_expectations() {
    let dir = tempfile::tempdir().unwrap();
    let exp = configs().join("privacy_expectations.txt");
    let o = dpound(&["matrix", "--world", s(&world()), "--suite", "all", "--expect", s(&exp), "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let m = fs::read_to_string(dir.path().join("matrix.txt")).unwrap();
    assert!(m.starts_with("option|privacy_ok|liquidity_demand|hop_count|failure_modes|exposed_to\n"));
    assert!(m.lines().any(|l| l.starts_with("U1.S2.D1|false|")));
    assert!(m.lines().any(|l| l.starts_with("U3.S2.D5|true|4550|")));
    assert_eq!(m.lines().count(), 1 + 29 + 1);
}

#[test]
fn matrix_suite_can_be_one_use_case() {
    let dir = tempfile::tempdir().unwrap();
    let o = dpound(&["matrix", "--world", s(&world()), "--suite", "U1", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0);
    let m = fs::read_to_string(dir.path().join("matrix.txt")).unwrap();
    assert!(m.lines().skip(1).all(|l| l.starts_with("U1.")));
    assert_eq!(m.lines().count(), 1 + 10);
}

#[test]
fn contradicted_expectation_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let exp = dir.path().join("exp.txt");
    fs::write(&exp, "U1.S2.D1|not_exposes|CB\n").unwrap();
    let o = dpound(&["matrix", "--world", s(&world()), "--suite", "U1", "--expect", s(&exp), "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("U1.S2.D1|not_exposes|CB"));
}

#[test]
fn out_defaults_to_sandbox_env() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_dpound"))
        .args(["run", "--world", s(&world()), "--scenario", s(&scenario("u2_standard"))])
        .env("DPOUND_SANDBOX_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("u2_standard.trace").exists());
}

#[test]
fn replay_round_trip_and_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("u1_standard");
    assert_eq!(code(&dpound(&["run", "--world", s(&world()), "--scenario", s(&sc), "--out", s(dir.path())])), 0);
    let trace = dir.path().join("u1_standard.trace");
    let o = dpound(&["replay", "--world", s(&world()), "--scenario", s(&sc), "--trace", s(&trace)]);
    assert_eq!(code(&o), 0);
    let o = dpound(&["replay", "--world", s(&world()), "--scenario", s(&sc), "--trace", s(&trace), "--seed", "99"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("trace mismatch"));
}

#[test]
fn validate_accepts_the_shipped_configs() {
    let o = dpound(&["validate", "--world", s(&world())]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), fs::read_dir(configs().join("scenarios")).unwrap().count());
}

fn report(pass: bool) -> PostconditionReport {
    PostconditionReport {
        scenario: "synthetic".into(),
        bindings: String::new(),
        outcome: "success".into(),
        ticks: 1,
        clauses: vec![Verdict { clause: "outcome=success".into(), pass, detail: String::new() }],
        invariants: vec![],
        liquidity: Default::default(),
        unsettled: vec![],
    }
}

#[test]
fn exit_code_follows_verdicts_only() {
    assert_eq!(exit_code(&[]), EXIT_OK);
    assert_eq!(exit_code(&[report(true), report(true)]), EXIT_OK);
    assert_eq!(exit_code(&[report(true), report(false)]), EXIT_ASSERTION);
}
