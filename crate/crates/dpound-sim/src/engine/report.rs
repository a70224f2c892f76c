//! Postcondition verdicts and run invariants.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::domain::{ParticipantRole, Tick};
use crate::ids::{ParticipantId, WalletId};
use crate::ledger::{LockState, PaymentCall};
use crate::money::Money;
use crate::netting::BatchState;
use crate::participants::{EscrowState, PipLockState};

use super::config::Clause;
use super::sim::{scan, LockEvent, Sim, Status};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub clause: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    fn new(clause: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Verdict { clause: clause.into(), pass, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostconditionReport {
    pub scenario: String,
    pub bindings: String,
    pub outcome: String,
    pub ticks: Tick,
    /// One verdict per expected clause, in scenario order.
    pub clauses: Vec<Verdict>,
    pub invariants: Vec<Verdict>,
    /// Peak intermediary liquidity by phase label.
    pub liquidity: BTreeMap<String, u64>,
    pub unsettled: Vec<String>,
}

impl PostconditionReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().chain(&self.invariants).all(|v| v.pass)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario {}", self.scenario);
        let _ = writeln!(s, "bindings {}", self.bindings);
        let _ = writeln!(s, "outcome {}", self.outcome);
        let _ = writeln!(s, "ticks {}", self.ticks);
        for (head, list) in [("clause", &self.clauses), ("invariant", &self.invariants)] {
            for v in list {
                let mark = if v.pass { "PASS" } else { "FAIL" };
                if v.detail.is_empty() {
                    let _ = writeln!(s, "{head} {mark} {}", v.clause);
                } else {
                    let _ = writeln!(s, "{head} {mark} {} ({})", v.clause, v.detail);
                }
            }
        }
        for (phase, peak) in &self.liquidity {
            let _ = writeln!(s, "liquidity {phase} {peak}");
        }
        for u in &self.unsettled {
            let _ = writeln!(s, "unsettled {u}");
        }
        let _ = writeln!(s, "verdict {}", if self.passed() { "PASS" } else { "FAIL" });
        s
    }
}

/// Replay PIP lock events against the ledger's payment calls: every call a
/// PIP makes must pass the sum of its active locks on that wallet.
pub fn check_min_available(timeline: &[LockEvent], calls: &[PaymentCall]) -> Result<(), String> {
    let mut active: BTreeMap<crate::ids::LockId, (ParticipantId, WalletId, Money)> = BTreeMap::new();
    for ev in timeline {
        match ev {
            LockEvent::Placed { lock, pip, wallet, amount } => {
                active.insert(*lock, (*pip, *wallet, *amount));
            }
            LockEvent::Ended { lock } => {
                active.remove(lock);
            }
            LockEvent::Call(i) => {
                let c = calls.get(*i).ok_or_else(|| format!("payment call {i} missing"))?;
                let expected: u64 =
                    active.values().filter(|(p, w, _)| *p == c.by && *w == c.wallet).map(|(_, _, a)| a.pence()).sum();
                if c.min_available.pence() != expected {
                    return Err(format!(
                        "tick {}: payment from {} by {} passed min_available {}, active PIP locks total {expected}",
                        c.tick, c.wallet, c.by, c.min_available
                    ));
                }
            }
        }
    }
    Ok(())
}

fn delta(sim: &Sim, p: ParticipantId) -> i128 {
    sim.w.positions().get(&p).copied().unwrap_or(0) - sim.start_positions.get(&p).copied().unwrap_or(0)
}

fn clause_verdict(sim: &Sim, c: &Clause) -> Verdict {
    let label = c.label();
    match c {
        Clause::Outcome(want) => {
            let got = sim.status == Status::Succeeded;
            Verdict::new(label, got == *want, sim.status.label())
        }
        Clause::PayerDelta(d) => {
            let got = delta(sim, sim.payer);
            Verdict::new(label, got == *d, format!("payer moved {got}"))
        }
        Clause::PayeeDelta(d) => {
            let got = delta(sim, sim.payee);
            Verdict::new(label, got == *d, format!("payee moved {got}"))
        }
        Clause::NoFundsMoved => {
            let now = sim.w.balances();
            let moved: Vec<String> = now
                .iter()
                .filter(|(k, v)| sim.start_balances.get(*k) != Some(*v))
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            Verdict::new(label, moved.is_empty(), moved.join(","))
        }
        Clause::LocksReleased => {
            let mut held = Vec::new();
            held.extend(sim.w.ledger.locks().filter(|l| l.state == LockState::Active).map(|l| l.id.to_string()));
            for book in sim.w.pip_locks.values() {
                held.extend(book.locks().filter(|l| l.state == PipLockState::Active).map(|l| l.id.to_string()));
            }
            held.extend(sim.w.escrow.records().filter(|r| r.state == EscrowState::Active).map(|r| r.id.to_string()));
            let avail = sim.available_of(sim.payer);
            let ok = held.is_empty() && avail == sim.start_available;
            let detail = if held.is_empty() { format!("payer available {avail}, was {}", sim.start_available) } else { format!("active {}", held.join(",")) };
            Verdict::new(label, ok, detail)
        }
        Clause::IntermediariesFlat => {
            let off: Vec<String> = sim
                .w
                .parts
                .keys()
                .filter(|p| sim.w.role(**p) != ParticipantRole::User)
                .filter_map(|p| {
                    let d = delta(sim, *p);
                    (d != 0).then(|| format!("{}={d}", sim.w.name_of(*p)))
                })
                .collect();
            Verdict::new(label, off.is_empty(), off.join(","))
        }
        Clause::Conservation => {
            let (ok, detail) = conservation(sim);
            Verdict::new(label, ok, detail)
        }
        Clause::SettlementEquality => {
            let payer = delta(sim, sim.payer);
            let payee = delta(sim, sim.payee);
            let backing = sim.w.rail.backing().and_then(|b| sim.w.rail.settlement_account(b)).map(|a| a.balance.signed()).unwrap_or(0);
            let backing0 = sim
                .w
                .rail
                .backing()
                .and_then(|b| sim.start_balances.get(&b.to_string()))
                .map(|m| m.signed())
                .unwrap_or(0);
            let issued = sim.w.ledger.minted().signed() - sim.w.ledger.burned().signed();
            let issued0 = sim.start_issued;
            let ok = payer == -payee && backing - backing0 == issued - issued0;
            Verdict::new(label, ok, format!("payer {payer}, payee {payee}, backing {}, issued {}", backing - backing0, issued - issued0))
        }
        Clause::Exposed(role, kind) => {
            let e = scan(&sim.w, &sim.delivered, None);
            Verdict::new(label, e.exposed(*role, *kind), "")
        }
        Clause::NotExposed(role, kind) => {
            let e = scan(&sim.w, &sim.delivered, None);
            Verdict::new(label, !e.exposed(*role, *kind), "")
        }
    }
}

fn conservation(sim: &Sim) -> (bool, String) {
    let issuance: Vec<&String> = sim.breaches.iter().filter(|b| b.contains("issuance") || b.contains("reserves")).collect();
    if let Some(b) = issuance.first() {
        return (false, (*b).clone());
    }
    let total: i128 = sim.w.positions().values().sum();
    let start: i128 = sim.start_positions.values().sum();
    (total == start, format!("net positions {total}, initially {start}"))
}

pub(crate) fn build(sim: &Sim) -> PostconditionReport {
    let clauses = sim.sc.expect.iter().map(|c| clause_verdict(sim, c)).collect();
    let mut inv = Vec::new();
    let (ok, detail) = conservation(sim);
    inv.push(Verdict::new("conservation", ok, detail));
    inv.push(Verdict::new("routing", sim.routing_errors.is_empty(), sim.routing_errors.join("; ")));
    inv.push(Verdict::new("protocol", sim.faults.is_empty(), sim.faults.join("; ")));
    let mut breaches: Vec<String> = sim.breaches.clone();
    if let Err(e) = check_min_available(&sim.timeline, sim.w.ledger.payment_calls()) {
        breaches.push(e);
    }
    inv.push(Verdict::new("ledger_invariants", breaches.is_empty(), breaches.join("; ")));
    let pending = sim.w.ledger.pending().filter(|p| p.state == crate::ledger::PendingState::AwaitingPipConfirmation).count();
    let suspense = sim.w.ledger.suspense();
    inv.push(Verdict::new(
        "no_pending_credits",
        pending == 0 && suspense.is_zero(),
        format!("{pending} pending, suspense {suspense}"),
    ));
    let unsettled: Vec<String> = sim
        .w
        .eps
        .batches()
        .iter()
        .filter(|b| b.state != BatchState::Settled)
        .map(|b| format!("{} {:?} {} obligations", b.id, b.state, b.obligations.len()))
        .collect();
    inv.push(Verdict::new("batches_settled", unsettled.is_empty(), unsettled.join("; ")));
    let abort = sim.aborted.as_ref().map(|e| e.to_string()).unwrap_or_default();
    inv.push(Verdict::new("terminated", sim.aborted.is_none(), abort));
    let liquidity = sim
        .phase_liq
        .iter()
        .map(|(p, m)| {
            let name = p.map(|s| s.name().to_string()).unwrap_or_else(|| "common".into());
            (name, m.values().map(|v| v.1).max().unwrap_or(0) as u64)
        })
        .collect();
    PostconditionReport {
        scenario: sim.sc.name.clone(),
        bindings: sim.w.bindings.iter().map(|o| o.to_string()).collect::<Vec<_>>().join(","),
        outcome: sim.status.label(),
        ticks: sim.now,
        clauses,
        invariants: inv,
        liquidity,
        unsettled,
    }
}
