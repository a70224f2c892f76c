mod common;

#[test]
fn ledger_locks_match_model() {
    common::lock_property(1000).unwrap();
}

#[test]
fn pip_locks_never_breached() {
    common::pip_lock_property(500).unwrap();
}

#[test]
fn two_credits_near_holding_limit() {
    common::holding_limit_property(500).unwrap();
}
