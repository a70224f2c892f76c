mod common;

use dpound_sim::engine::config::{Clause, Decision};
use dpound_sim::engine::sim::Status;
use dpound_sim::engine::{run, validate, EngineError, ScriptEvent};
use dpound_sim::ledger::LimitMode;
use dpound_sim::options::Slot;

#[test]
fn u1_standard_parent_pays_child() {
    let cfg = common::world();
    let sc = common::scenario("u1_standard");
    let out = common::run_ok(&cfg, &sc);
    assert_eq!(out.status, Status::Succeeded);
    assert!(out.passed(), "{}", out.report.render());
    assert!(out.report.clauses.iter().any(|v| v.clause == "payee_delta=5000" && v.pass));
}

#[test]
fn u2_consumer_rejection_moves_nothing() {
    let cfg = common::world();
    let out = common::run_ok(&cfg, &common::scenario("u2_reject"));
    assert!(matches!(out.status, Status::Failed(_)));
    assert!(out.passed(), "{}", out.report.render());
    assert!(out.report.clauses.iter().any(|v| v.clause == "no_funds_moved" && v.pass));
}

#[test]
fn u3_escrow_through_the_fmi() {
    let cfg = common::world();
    let sc = common::scenario("u3_fmi_escrow");
    assert_eq!(sc.bindings.get(Slot::U3S2), Some(5));
    let out = common::run_ok(&cfg, &sc);
    assert_eq!(out.status, Status::Succeeded, "{}", out.report.render());
    assert!(out.passed());
    assert_eq!(out.liquidity.get(&Some(Slot::U3S3)).copied(), Some(3000));
}

#[test]
fn every_scenario_file_meets_its_expectations() {
    let cfg = common::world();
    for sc in common::all_scenarios() {
        let out = common::run_ok(&cfg, &sc);
        assert!(out.passed(), "{}", out.report.render());
        assert_eq!(out.report.clauses.len(), sc.expect.len(), "{}: one verdict per clause", sc.name);
    }
}

#[test]
fn standard_success_over_acceptable_combinations() {
    let n = common::standard_success(&common::world()).unwrap();
    assert_eq!(n, 12 + 12 + 48);
}

#[test]
fn failure_scripts_leave_no_trace_on_the_ledgers() {
    common::failure_postconditions(&common::world()).unwrap();
}

#[test]
fn holding_limit_refuses_without_waterfall() {
    let cfg = common::world();
    assert_eq!(cfg.limit_mode, LimitMode::Reject);
    let out = common::run_ok(&cfg, &common::scenario("u1_holding_limit"));
    assert!(matches!(out.status, Status::Failed(_)));
    assert!(out.passed(), "{}", out.report.render());
}

#[test]
fn holding_limit_overflows_to_linked_account_with_waterfall() {
    let mut cfg = common::world();
    cfg.limit_mode = LimitMode::Waterfall;
    let mut sc = common::scenario("u1_holding_limit");
    sc.expect = vec![Clause::Outcome(true), Clause::PayerDelta(-5000), Clause::PayeeDelta(5000), Clause::Conservation];
    let out = common::run_ok(&cfg, &sc);
    assert_eq!(out.status, Status::Succeeded, "{}", out.report.render());
    assert!(out.passed(), "{}", out.report.render());
}

#[test]
fn missing_binding_names_the_slot() {
    let mut cfg = common::world();
    cfg.bindings = cfg.bindings.iter().filter(|o| o.slot != Slot::U1S2).fold(Default::default(), |b: dpound_sim::options::Bindings, o| b.with(o));
    let err = validate(&cfg, &common::scenario("u1_standard")).unwrap_err();
    assert!(matches!(&err, EngineError::Invalid(m) if m.contains("U1.S2")), "{err}");
}

#[test]
fn mismatched_lock_holders_are_refused() {
    let cfg = common::world();
    let mut sc = common::scenario("u3_standard");
    sc.bindings.bind(Slot::U3S2.option(1).unwrap());
    sc.bindings.bind(Slot::U3S3.option(3).unwrap());
    assert!(matches!(validate(&cfg, &sc), Err(EngineError::Invalid(_))));
}

#[test]
fn unknown_payer_is_a_config_error() {
    let cfg = common::world();
    let mut sc = common::scenario("u1_standard");
    sc.payer = "nobody".into();
    assert!(matches!(run(&cfg, &sc, None), Err(EngineError::Invalid(m)) if m.contains("nobody")));
}

#[test]
fn payee_pip_timeout_expires_the_pending_credit() {
    let cfg = common::world();
    let mut sc = common::scenario("u1_standard");
    sc.script = vec![ScriptEvent::PayeePip(Decision::Timeout)];
    sc.expect = dpound_sim::engine::config::default_failure_clauses();
    let out = common::run_ok(&cfg, &sc);
    assert!(out.passed(), "{}", out.report.render());
    assert!(out.ticks > cfg.pending_timeout);
}
