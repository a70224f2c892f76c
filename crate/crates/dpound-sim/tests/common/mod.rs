//! Shared fixtures and property checkers. Each checker returns the first
//! counterexample as an error so the acceptance target can report it.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use dpound_sim::domain::Tick;
use dpound_sim::engine::sim::LockEvent;
use dpound_sim::engine::{run, RunOutput, Scenario, WorldConfig};
use dpound_sim::ids::{AccountId, BatchId, IdSource, LockId, MessageId, ParticipantId};
use dpound_sim::ledger::{Beneficiary, CoreLedger, LimitMode, LockState, PayTarget};
use dpound_sim::money::Money;
use dpound_sim::netting::{settle_batch, NetSettlementBatch, NettingError, Obligation};
use dpound_sim::options::{Bindings, Slot};
use dpound_sim::participants::{PipLock, PipLockBook, PipLockState};
use dpound_sim::rail::{Rail, SettlementKind};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

pub fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn world() -> WorldConfig {
    WorldConfig::parse(&fs::read_to_string(configs().join("world.cfg")).unwrap()).unwrap()
}

pub fn scenario(name: &str) -> Scenario {
    let p = configs().join("scenarios").join(format!("{name}.cfg"));
    Scenario::parse(&fs::read_to_string(&p).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

pub fn all_scenarios() -> Vec<Scenario> {
    let mut paths: Vec<PathBuf> =
        fs::read_dir(configs().join("scenarios")).unwrap().map(|e| e.unwrap().path()).collect();
    paths.sort();
    paths.iter().map(|p| Scenario::parse(&fs::read_to_string(p).unwrap()).unwrap()).collect()
}

pub fn standard_scenarios() -> Vec<Scenario> {
    ["u1_standard", "u2_standard", "u3_standard"].iter().map(|n| scenario(n)).collect()
}

pub fn run_ok(cfg: &WorldConfig, sc: &Scenario) -> RunOutput {
    run(cfg, sc, None).unwrap_or_else(|e| panic!("{}: {e}", sc.name))
}

/// Bindings from `base` with `combo` laid over them.
pub fn with_bindings(sc: &Scenario, combo: &Bindings) -> Scenario {
    let mut s = sc.clone();
    for o in combo.iter() {
        s.bindings.bind(o);
    }
    s
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() })
}

fn flatten(r: Result<(), proptest::test_runner::TestError<impl std::fmt::Debug>>) -> Result<(), String> {
    r.map_err(|e| e.to_string())
}

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(TestCaseError::fail(format!($($fmt)+)));
        }
    };
}

// ---- locks on the core ledger ----

#[derive(Debug, Clone)]
pub enum LockOp {
    Lock { wallet: usize, amount: u64, ttl: Tick },
    Release { lock: usize, to_wallet: bool },
    Cancel { lock: usize },
    Pay { wallet: usize, amount: u64, min: u64 },
    Advance(Tick),
}

fn lock_op() -> impl Strategy<Value = LockOp> {
    prop_oneof![
        3 => (0..3usize, 0..6000u64, 0..30u64).prop_map(|(wallet, amount, ttl)| LockOp::Lock { wallet, amount, ttl }),
        2 => (0..12usize, any::<bool>()).prop_map(|(lock, to_wallet)| LockOp::Release { lock, to_wallet }),
        1 => (0..12usize).prop_map(|lock| LockOp::Cancel { lock }),
        2 => (0..3usize, 0..6000u64, 0..3000u64).prop_map(|(wallet, amount, min)| LockOp::Pay { wallet, amount, min }),
        2 => (0..10u64).prop_map(LockOp::Advance),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ModelLock {
    Active,
    Released,
    Cancelled,
    Expired,
}

fn lock_case(balances: &[u64], ops: &[LockOp]) -> Result<(), TestCaseError> {
    let pip = ParticipantId(1);
    let mut ids = IdSource::new(1);
    let mut l = CoreLedger::new(LimitMode::Reject, 100);
    l.register_manager(pip);
    let funding = AccountId(1);
    let mut wallets = Vec::new();
    for (i, b) in balances.iter().enumerate() {
        let w = l.open_wallet(&mut ids, ParticipantId(10 + i as u32), pip, None, false, None).unwrap();
        l.genesis(w, Money::new(*b), funding).unwrap();
        wallets.push(w);
    }
    let sink = l.open_wallet(&mut ids, pip, pip, None, false, None).unwrap();
    let mut bal: Vec<i128> = balances.iter().map(|b| *b as i128).collect();
    let mut locks: Vec<(LockId, usize, u64, Tick, ModelLock)> = Vec::new();
    let mut now: Tick = 0;
    for op in ops {
        match *op {
            LockOp::Lock { wallet, amount, ttl } => {
                let active: i128 = locks.iter().filter(|x| x.1 == wallet && x.4 == ModelLock::Active).map(|x| x.2 as i128).sum();
                let want = amount > 0 && bal[wallet] - active >= amount as i128;
                let got = l.lock_funds(&mut ids, now, wallets[wallet], Money::new(amount), Beneficiary::Account(funding), now + ttl, pip);
                check!(got.is_ok() == want, "lock {amount} on wallet {wallet}: ledger said {got:?}, model {want}");
                if let Ok(id) = got {
                    locks.push((id, wallet, amount, now + ttl, ModelLock::Active));
                }
            }
            LockOp::Release { lock, to_wallet } => {
                let Some(entry) = locks.get_mut(lock) else { continue };
                let w = wallets[entry.1];
                let avail_before = l.available(w).unwrap();
                let ledger_before = l.wallet(w).unwrap().ledger_balance;
                let target = if to_wallet { PayTarget::Wallet(sink) } else { PayTarget::Burn };
                let got = l.release_and_pay(now, entry.0, pip, target);
                check!(got.is_ok() == (entry.4 == ModelLock::Active), "release of {:?} lock: {got:?}", entry.4);
                if got.is_ok() {
                    entry.4 = ModelLock::Released;
                    bal[entry.1] -= entry.2 as i128;
                    let ledger_after = l.wallet(w).unwrap().ledger_balance;
                    check!(ledger_before.pence() - ledger_after.pence() == entry.2, "release debited {ledger_before} to {ledger_after}");
                    check!(l.available(w).unwrap() == avail_before, "release moved available from {avail_before}");
                }
            }
            LockOp::Cancel { lock } => {
                let Some(entry) = locks.get_mut(lock) else { continue };
                let got = l.cancel_lock(now, entry.0, pip);
                check!(got.is_ok() == (entry.4 == ModelLock::Active), "cancel of {:?} lock: {got:?}", entry.4);
                if got.is_ok() {
                    entry.4 = ModelLock::Cancelled;
                }
            }
            LockOp::Pay { wallet, amount, min } => {
                let active: i128 = locks.iter().filter(|x| x.1 == wallet && x.4 == ModelLock::Active).map(|x| x.2 as i128).sum();
                let want = amount > 0 && bal[wallet] - amount as i128 - active >= min as i128;
                let got = l.transfer(&mut ids, now, wallets[wallet], sink, Money::new(amount), Money::new(min), pip, MessageId(0));
                check!(got.is_ok() == want, "pay {amount} min {min} from wallet {wallet}: {got:?}, model {want}");
                if want {
                    bal[wallet] -= amount as i128;
                }
            }
            LockOp::Advance(d) => {
                now += d;
                let expired = l.expire_locks(now);
                for x in locks.iter_mut().filter(|x| x.4 == ModelLock::Active && x.3 < now) {
                    x.4 = ModelLock::Expired;
                    check!(expired.contains(&x.0), "lock {} past expiry still active", x.0);
                }
                check!(expired.len() == locks.iter().filter(|x| x.4 == ModelLock::Expired && expired.contains(&x.0)).count(), "unexpected expiries {expired:?}");
            }
        }
        for (i, w) in wallets.iter().enumerate() {
            let ledger = l.wallet(*w).unwrap().ledger_balance.pence() as i128;
            check!(ledger == bal[i], "wallet {i} ledger {ledger}, model {}", bal[i]);
            let active: i128 = locks.iter().filter(|x| x.1 == i && x.4 == ModelLock::Active).map(|x| x.2 as i128).sum();
            let avail = l.available(*w).unwrap().pence() as i128;
            check!(avail == ledger - active, "wallet {i}: available {avail} != ledger {ledger} - locks {active}");
        }
        for x in &locks {
            let st = l.lock(x.0).unwrap().state;
            let want = match x.4 {
                ModelLock::Active => LockState::Active,
                ModelLock::Released => LockState::Released,
                ModelLock::Cancelled => LockState::Cancelled,
                ModelLock::Expired => LockState::Expired,
            };
            check!(st == want, "lock {} is {st:?}, model {want:?}", x.0);
        }
        l.check_invariants().map_err(TestCaseError::fail)?;
    }
    Ok(())
}

/// Available balance, lock state transitions and the release contract
/// against a model ledger.
pub fn lock_property(cases: u32) -> Result<(), String> {
    let strat = (prop::collection::vec(0..10_000u64, 3), prop::collection::vec(lock_op(), 1..40));
    flatten(runner(cases).run(&strat, |(b, ops)| lock_case(&b, &ops)))
}

// ---- PIP-held locks and min_available ----

/// A PIP keeps its own locks and must pass their sum as `min_available` on
/// every payment. Brute force: after every accepted payment each wallet
/// still covers its PIP locks.
fn pip_lock_case(balance: u64, ops: &[(u8, u64)]) -> Result<(), TestCaseError> {
    let pip = ParticipantId(1);
    let mut ids = IdSource::new(3);
    let mut l = CoreLedger::new(LimitMode::Reject, 100);
    l.register_manager(pip);
    let w = l.open_wallet(&mut ids, ParticipantId(9), pip, None, false, None).unwrap();
    let sink = l.open_wallet(&mut ids, pip, pip, None, false, None).unwrap();
    l.genesis(w, Money::new(balance), AccountId(1)).unwrap();
    let mut book = PipLockBook::new();
    let mut placed: Vec<LockId> = Vec::new();
    for (i, &(kind, amount)) in ops.iter().enumerate() {
        let now = i as Tick;
        match kind % 4 {
            0 => {
                let free = l.available(w).unwrap().saturating_sub(book.active_sum(w));
                if amount > 0 && free >= Money::new(amount) {
                    let id: LockId = ids.next();
                    book.place(PipLock { id, wallet: w, amount: Money::new(amount), beneficiary: Beneficiary::Account(AccountId(1)), expiry: now + 20, state: PipLockState::Active });
                    placed.push(id);
                }
            }
            1 => {
                let _ = l.transfer(&mut ids, now, w, sink, Money::new(amount), book.active_sum(w), pip, MessageId(0));
            }
            2 => {
                if let Some(id) = placed.get(amount as usize % placed.len().max(1)).copied() {
                    if let Ok(lk) = book.release(id) {
                        let got = l.transfer(&mut ids, now, w, sink, lk.amount, book.active_sum(w), pip, MessageId(0));
                        check!(got.is_ok(), "release payment of {} refused: {got:?}", lk.amount);
                    }
                }
            }
            _ => {
                book.expire(now);
            }
        }
        let held: u64 = book.locks().filter(|x| x.state == PipLockState::Active).map(|x| x.amount.pence()).sum();
        let avail = l.available(w).unwrap().pence();
        check!(avail >= held, "wallet available {avail} below PIP locks {held}");
    }
    for c in l.payment_calls() {
        check!(!c.accepted || c.ledger_before.pence() as i128 - c.amount.pence() as i128 - c.locks_before.pence() as i128 >= c.min_available.pence() as i128, "accepted call breached its minimum: {c:?}");
    }
    Ok(())
}

pub fn pip_lock_property(cases: u32) -> Result<(), String> {
    let strat = (0..20_000u64, prop::collection::vec((any::<u8>(), 0..8000u64), 1..40));
    flatten(runner(cases).run(&strat, |(b, ops)| pip_lock_case(b, &ops)))
}

/// Recompute the PIP lock sum for each payment call by replaying the
/// timeline from the start, and compare with what the PIP passed.
pub fn brute_force_min_available(out: &RunOutput) -> Result<(), String> {
    let calls = out.world.ledger.payment_calls();
    for (pos, ev) in out.timeline.iter().enumerate() {
        let LockEvent::Call(i) = ev else { continue };
        let c = &calls[*i];
        let mut sum = 0u64;
        for (j, e) in out.timeline[..pos].iter().enumerate() {
            if let LockEvent::Placed { lock, pip, wallet, amount } = e {
                let ended = out.timeline[j..pos].iter().any(|x| matches!(x, LockEvent::Ended { lock: l } if l == lock));
                if !ended && *pip == c.by && *wallet == c.wallet {
                    sum += amount.pence();
                }
            }
        }
        if c.min_available.pence() < sum {
            return Err(format!("call {i} passed min {} under PIP locks {sum}", c.min_available));
        }
        if c.accepted && (c.ledger_before.pence() as i128 - c.amount.pence() as i128 - c.locks_before.pence() as i128) < sum as i128 {
            return Err(format!("call {i} accepted though it breaches PIP locks {sum}"));
        }
    }
    Ok(())
}

/// U3 runs under the PIP lock options with random amounts, expiries,
/// delivery outcomes and seeds.
pub fn min_available_property(cases: u32) -> Result<(), String> {
    let cfg = world();
    let base = scenario("u3_standard");
    let strat = (2u8..=4, 1..60_000u64, 50..400u64, 0..3u8, any::<u64>());
    flatten(runner(cases).run(&strat, |(n, amt, expiry, delivery, seed)| {
        let mut sc = base.clone();
        sc.bindings.bind(Slot::U3S2.option(n).unwrap());
        sc.bindings.bind(Slot::U3S3.option(2).unwrap());
        sc.amount = Money::new(amt);
        sc.expiry = expiry;
        sc.script.retain(|e| !matches!(e, dpound_sim::engine::ScriptEvent::Delivery(_)));
        let d = match delivery {
            0 => dpound_sim::engine::config::Delivery::Success,
            1 => dpound_sim::engine::config::Delivery::Fail,
            _ => dpound_sim::engine::config::Delivery::None,
        };
        sc.script.push(dpound_sim::engine::ScriptEvent::Delivery(d));
        sc.expect = vec![];
        let out = run(&cfg, &sc, Some(seed)).map_err(|e| TestCaseError::fail(e.to_string()))?;
        brute_force_min_available(&out).map_err(TestCaseError::fail)?;
        let inv = out.report.invariants.iter().find(|v| v.clause == "ledger_invariants").unwrap();
        check!(inv.pass, "ledger invariants: {}", inv.detail);
        Ok(())
    }))
}

// ---- netting ----

/// Settle a random batch and compare with applying every obligation gross.
fn netting_case(balances: &[u64], obligations: &[(usize, usize, u64)]) -> Result<(), TestCaseError> {
    let n = balances.len();
    let mut ids = IdSource::new(5);
    let mut rail = Rail::new();
    let parts: Vec<ParticipantId> = (0..n).map(|i| ParticipantId(100 + i as u32)).collect();
    let accts: Vec<AccountId> = parts
        .iter()
        .zip(balances)
        .map(|(p, b)| rail.open_settlement_account(&mut ids, *p, &format!("{:02}-00-00", 10 + p.0 % 90), "00000001", Money::new(*b), SettlementKind::Bank))
        .collect();
    let obs: Vec<Obligation> = obligations
        .iter()
        .filter(|(d, c, _)| d % n != c % n)
        .map(|&(d, c, a)| Obligation { debtor: parts[d % n], creditor: parts[c % n], amount: Money::new(a) })
        .collect();
    let mut gross: Vec<i128> = balances.iter().map(|b| *b as i128).collect();
    for o in &obs {
        let d = parts.iter().position(|p| *p == o.debtor).unwrap();
        let c = parts.iter().position(|p| *p == o.creditor).unwrap();
        gross[d] -= o.amount.pence() as i128;
        gross[c] += o.amount.pence() as i128;
    }
    let mut batch = NetSettlementBatch::new(BatchId(1), 0, 50);
    batch.obligations = obs;
    let lookup: BTreeMap<ParticipantId, AccountId> = parts.iter().copied().zip(accts.iter().copied()).collect();
    let res = settle_batch(&mut rail, 50, &mut batch, &|p| lookup.get(&p).copied());
    let after: Vec<i128> = accts.iter().map(|a| rail.balance(*a).unwrap().pence() as i128).collect();
    if gross.iter().all(|g| *g >= 0) {
        check!(res.is_ok(), "fundable batch refused: {res:?}");
        check!(after == gross, "net {after:?} != gross {gross:?}");
        let net_sum: i128 = batch.net.values().sum();
        check!(net_sum == 0, "net positions sum to {net_sum}");
    } else {
        check!(matches!(res, Err(NettingError::InsufficientSettlementFunds { .. })), "unfundable batch: {res:?}");
        let before: Vec<i128> = balances.iter().map(|b| *b as i128).collect();
        check!(after == before, "failed batch moved balances to {after:?}");
    }
    Ok(())
}

pub fn netting_property(cases: u32) -> Result<(), String> {
    let strat = (2..=6usize).prop_flat_map(|n| {
        (prop::collection::vec(0..20_000u64, n), prop::collection::vec((0..n, 0..n, 1..10_000u64), 0..=20))
    });
    flatten(runner(cases).run(&strat, |(b, o)| netting_case(&b, &o)))
}

// ---- holding limit under two concurrent credits ----

fn limit_case(limit: u64, start: u64, a: u64, b: u64, order: bool, waterfall: bool) -> Result<(), TestCaseError> {
    let pip = ParticipantId(1);
    let mut ids = IdSource::new(9);
    let mode = if waterfall { LimitMode::Waterfall } else { LimitMode::Reject };
    let mut l = CoreLedger::new(mode, 100);
    l.register_manager(pip);
    let src = l.open_wallet(&mut ids, ParticipantId(2), pip, None, false, None).unwrap();
    let linked = waterfall.then_some(AccountId(7));
    let dst = l.open_wallet(&mut ids, ParticipantId(3), pip, Some(Money::new(limit)), false, linked).unwrap();
    l.genesis(src, Money::new(a + b), AccountId(1)).unwrap();
    l.genesis(dst, Money::new(start), AccountId(1)).unwrap();
    let pa = l.transfer(&mut ids, 1, src, dst, Money::new(a), Money::ZERO, pip, MessageId(1)).unwrap();
    let pb = l.transfer(&mut ids, 1, src, dst, Money::new(b), Money::ZERO, pip, MessageId(2)).unwrap();
    let ids_in = |o: dpound_sim::ledger::CreditOutcome| match o {
        dpound_sim::ledger::CreditOutcome::Pending(p) => p,
        other => panic!("user wallet credited without confirmation: {other:?}"),
    };
    let (first, second) = if order { (ids_in(pa), ids_in(pb)) } else { (ids_in(pb), ids_in(pa)) };
    let (fa, fb) = if order { (a, b) } else { (b, a) };
    let mut expect_dst = start as i128;
    let mut expect_src = 0i128;
    for (p, amt) in [(first, fa), (second, fb)] {
        let out = l.confirm_credit(2, p, pip, dpound_sim::ledger::Decision::Approve).unwrap();
        let fits = expect_dst + amt as i128 <= limit as i128;
        match out {
            dpound_sim::ledger::CreditOutcome::Completed(c) => {
                check!(fits || waterfall, "credit {amt} accepted over the limit");
                let excess = c.waterfall.map(|(_, e)| e.pence()).unwrap_or(0);
                expect_dst += amt as i128 - excess as i128;
            }
            dpound_sim::ledger::CreditOutcome::Rejected(_) => {
                check!(!fits && !waterfall, "credit {amt} refused though it fits");
                expect_src += amt as i128;
            }
            other => return Err(TestCaseError::fail(format!("unexpected {other:?}"))),
        }
        let bal = l.wallet(dst).unwrap().ledger_balance.pence() as i128;
        check!(bal == expect_dst, "payee {bal}, expected {expect_dst}");
        check!(bal <= limit as i128, "payee {bal} above limit {limit}");
    }
    check!(l.wallet(src).unwrap().ledger_balance.pence() as i128 == expect_src, "refunds wrong");
    l.check_invariants().map_err(TestCaseError::fail)?;
    Ok(())
}

pub fn holding_limit_property(cases: u32) -> Result<(), String> {
    let strat = (1000..20_000u64)
        .prop_flat_map(|limit| (Just(limit), 0..=limit, 1..limit, 1..limit, any::<bool>(), any::<bool>()));
    flatten(runner(cases).run(&strat, |(limit, start, a, b, order, wf)| limit_case(limit, start, a, b, order, wf)))
}

// ---- engine-level criteria ----

use dpound_sim::engine::config::{default_failure_clauses, Decision, Delivery};
use dpound_sim::engine::matrix::row_bindings;
use dpound_sim::engine::{check_trace, evaluate_matrix, render_matrix, ScriptEvent};
use dpound_sim::options::{acceptable_combinations, OptionId, UseCase};

/// Each standard scenario under every acceptable binding combination.
pub fn standard_runs() -> Vec<Scenario> {
    let mut out = Vec::new();
    for sc in standard_scenarios() {
        for b in acceptable_combinations(sc.use_case) {
            let mut s = sc.clone();
            s.bindings = b;
            out.push(s);
        }
    }
    out
}

pub fn standard_success(cfg: &WorldConfig) -> Result<usize, String> {
    let runs = standard_runs();
    for sc in &runs {
        let started = std::time::Instant::now();
        let out = run(cfg, sc, None).map_err(|e| format!("{} {}: {e}", sc.name, sc.bindings))?;
        if !out.passed() {
            return Err(format!("{} {}:\n{}", sc.name, sc.bindings, out.report.render()));
        }
        if out.ticks > cfg.tick_budget {
            return Err(format!("{} {} took {} ticks", sc.name, sc.bindings, out.ticks));
        }
        let secs = started.elapsed().as_secs_f64();
        if secs > 1.0 {
            return Err(format!("{} {} took {secs:.2}s", sc.name, sc.bindings));
        }
    }
    Ok(runs.len())
}

/// Failure scripts for a use case: rejections, a payee PIP timeout, an
/// unknown alias and, for U3, failed or missing delivery.
pub fn failure_variants(sc: &Scenario) -> Vec<(String, Scenario)> {
    let mut v = Vec::new();
    let mut add = |label: &str, f: &dyn Fn(&mut Scenario)| {
        let mut s = sc.clone();
        s.script.retain(|e| !matches!(e, ScriptEvent::Delivery(_)));
        s.expect = default_failure_clauses();
        f(&mut s);
        v.push((label.to_string(), s));
    };
    add("authorise=reject", &|s| s.script.push(ScriptEvent::Authorise(Decision::Reject)));
    match sc.use_case {
        UseCase::U1 => {
            add("payee_pip=reject", &|s| s.script.push(ScriptEvent::PayeePip(Decision::Reject)));
            add("payee_pip=timeout", &|s| s.script.push(ScriptEvent::PayeePip(Decision::Timeout)));
            add("bad alias", &|s| s.alias = "07700999999".into());
        }
        UseCase::U2 => add("bad alias", &|s| s.alias = "07700999999".into()),
        UseCase::U3 => {
            add("bad alias", &|s| s.alias = "07700999999".into());
            add("delivery=fail", &|s| s.script.push(ScriptEvent::Delivery(Delivery::Fail)));
            add("delivery=none", &|s| s.script.push(ScriptEvent::Delivery(Delivery::None)));
        }
    }
    v
}

pub fn failure_postconditions(cfg: &WorldConfig) -> Result<usize, String> {
    let mut n = 0;
    for base in standard_runs() {
        for (label, sc) in failure_variants(&base) {
            n += 1;
            let out = run(cfg, &sc, None).map_err(|e| format!("{} {label} {}: {e}", sc.name, sc.bindings))?;
            if !out.passed() {
                return Err(format!("{} {label} {}:\n{}", sc.name, sc.bindings, out.report.render()));
            }
        }
    }
    Ok(n)
}

/// Slots whose phase belongs to `uc`. U3 also binds U2.S2 for its payout,
/// but labels that part of the flow as its own release phase.
pub fn own_slots(uc: UseCase) -> impl Iterator<Item = Slot> {
    uc.slots().iter().copied().filter(move |s| s.name().starts_with(uc.name()))
}

/// Every run behind the evaluation matrix: each option's row bindings
/// under the standard script and each failure probe.
pub fn matrix_runs() -> Vec<(String, WorldConfig, Scenario)> {
    let cfg = world();
    let mut out = Vec::new();
    for sc in standard_scenarios() {
        for slot in own_slots(sc.use_case) {
            for o in slot.options() {
                let mut base = sc.clone();
                base.bindings = row_bindings(o);
                let mut probes = vec![(o.to_string(), base.clone())];
                probes.extend(failure_variants(&base).into_iter().map(|(l, s)| (format!("{o} {l}"), s)));
                let mut sf = base.clone();
                sf.script.push(ScriptEvent::SchemeFailure);
                sf.expect = vec![];
                probes.push((format!("{o} scheme failure"), sf));
                for (label, s) in probes {
                    out.push((label, cfg.clone(), s));
                }
            }
        }
    }
    let mut open = cfg.clone();
    open.seal_via_cbdc = false;
    let mut u2 = scenario("u2_standard");
    u2.bindings = row_bindings(Slot::U2S1.option(1).unwrap());
    out.push(("U2.S1.D1/unsealed".into(), open, u2));
    out
}

/// Two-ledger conservation at the end of every matrix run, plus the trace
/// checker's per-message reserve and issuance checks.
pub fn conservation(runs: &[(String, WorldConfig, Scenario)]) -> Result<usize, String> {
    for (label, cfg, sc) in runs {
        let out = run(cfg, sc, None).map_err(|e| format!("{label}: {e}"))?;
        let v = out.report.invariants.iter().find(|v| v.clause == "conservation").unwrap();
        if !v.pass {
            return Err(format!("{label}: {}", v.detail));
        }
        let l = out.report.invariants.iter().find(|v| v.clause == "ledger_invariants").unwrap();
        if !l.pass {
            return Err(format!("{label}: {}", l.detail));
        }
        check_trace(&out.trace_text()).map_err(|e| format!("{label}: {e}"))?;
    }
    Ok(runs.len())
}

pub fn golden(o: OptionId) -> String {
    fs::read_to_string(configs().join("golden").join(format!("{o}.edges"))).unwrap_or_default()
}

/// Role-level edges of each option's phase against its golden file, twice.
pub fn goldens(cfg: &WorldConfig) -> Result<usize, String> {
    let mut n = 0;
    for sc in standard_scenarios() {
        for slot in own_slots(sc.use_case) {
            for o in slot.options() {
                let mut s = sc.clone();
                s.bindings = row_bindings(o);
                let render = || -> Result<String, String> {
                    let out = run(cfg, &s, None).map_err(|e| format!("{o}: {e}"))?;
                    Ok(out.role_edges_in(o.slot).into_iter().map(|e| e + "\n").collect())
                };
                let first = render()?;
                if first != render()? {
                    return Err(format!("{o}: edges differ between runs"));
                }
                let want = golden(o);
                if want.is_empty() {
                    return Err(format!("{o}: no golden file"));
                }
                if first != want {
                    return Err(format!("{o}: edges\n{first}golden\n{want}"));
                }
                n += 1;
            }
        }
    }
    Ok(n)
}

/// Everything the CLI would write for a full matrix run, by file name.
pub fn matrix_artifacts(cfg: &WorldConfig) -> Result<BTreeMap<String, String>, String> {
    let scs = all_scenarios();
    let rows = evaluate_matrix(cfg, &scs).map_err(|e| e.to_string())?;
    let mut files = BTreeMap::new();
    files.insert("matrix.txt".to_string(), render_matrix(&rows));
    for sc in &scs {
        let out = run(cfg, sc, None).map_err(|e| format!("{}: {e}", sc.name))?;
        files.insert(format!("{}.trace", sc.name), out.trace_text());
        files.insert(format!("{}.report", sc.name), out.report.render());
        files.insert(format!("{}.exposure", sc.name), out.exposure.export());
    }
    Ok(files)
}
