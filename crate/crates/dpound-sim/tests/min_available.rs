mod common;

#[test]
fn pip_lock_workloads_respect_min_available() {
    common::min_available_property(150).unwrap();
}

#[test]
fn standard_pip_lock_runs_pass_a_nonzero_minimum() {
    use dpound_sim::engine::sim::LockEvent;
    use dpound_sim::options::Slot;
    let cfg = common::world();
    for n in 2..=4 {
        let mut sc = common::scenario("u3_standard");
        sc.bindings.bind(Slot::U3S2.option(n).unwrap());
        sc.bindings.bind(Slot::U3S3.option(2).unwrap());
        let out = common::run_ok(&cfg, &sc);
        assert!(out.passed(), "{}", out.report.render());
        assert!(out.timeline.iter().any(|e| matches!(e, LockEvent::Placed { .. })), "U3.S2.D{n} placed no PIP lock");
        common::brute_force_min_available(&out).unwrap();
    }
}
