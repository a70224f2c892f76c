mod common;

use dpound_sim::engine::{check_trace, replay, run, EngineError};

fn fresh(name: &str) -> String {
    run(&common::world(), &common::scenario(name), None).unwrap().trace_text()
}

#[test]
fn fresh_trace_replays_identically() {
    let cfg = common::world();
    for sc in common::all_scenarios() {
        let text = run(&cfg, &sc, None).unwrap().trace_text();
        replay(&cfg, &sc, &text, None).unwrap_or_else(|e| panic!("{}: {e}", sc.name));
    }
}

#[test]
fn perturbed_seed_is_a_mismatch() {
    let text = fresh("u1_standard");
    let err = replay(&common::world(), &common::scenario("u1_standard"), &text, Some(8)).unwrap_err();
    assert!(matches!(err, EngineError::TraceMismatch { line: 1, .. }), "{err}");
}

#[test]
fn corrupted_delta_fails_the_checker() {
    let text = fresh("u1_standard");
    let bad: String = text
        .lines()
        .map(|l| if l.contains("|Transfer|") { l.replace("|5000|", "|4000|") } else { l.to_string() } + "\n")
        .collect();
    assert_ne!(bad, text);
    let err = replay(&common::world(), &common::scenario("u1_standard"), &bad, None).unwrap_err();
    assert!(matches!(err, EngineError::TraceInvariant { .. }), "{err}");
}

#[test]
fn one_sided_reserve_move_is_caught() {
    let text = fresh("u1_standard");
    let bad: String = text.lines().filter(|l| !l.starts_with("RTGS|") || !l.contains("|Credit|")).map(|l| format!("{l}\n")).collect();
    assert!(matches!(check_trace(&bad), Err(EngineError::TraceInvariant { .. })));
}

#[test]
fn every_trace_passes_the_independent_checker() {
    let cfg = common::world();
    for sc in common::all_scenarios() {
        let text = run(&cfg, &sc, None).unwrap().trace_text();
        check_trace(&text).unwrap_or_else(|e| panic!("{}: {e}", sc.name));
    }
}
