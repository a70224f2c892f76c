//! The simulator: message bus, timers, trace and the run loop.
//!
//! Messages sent during tick `t` are delivered during `t + 1`. Within a tick
//! each sender's queue is FIFO and senders take turns round-robin, starting
//! from an offset derived from the seed and the tick.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::domain::{Alias, DatumKind, ParticipantRole, PersonalDatum, Tick};
use crate::ids::{AccountId, BatchId, LockId, ParticipantId, PendingCreditId, WalletId};
use crate::ledger::Rejection;
use crate::money::Money;
use crate::options::{Slot, UseCase};
use crate::privacy::{taint_scan, Envelope, ExposureReport, FieldValue, Fields, ScanItem, SealedSection};

use super::config::{Decision, Delivery, Scenario, ScriptEvent, WorldConfig};
use super::message::{admits, Body, Message, MsgKind};
use super::report::{self, PostconditionReport};
use super::world::World;
use super::EngineError;

pub(crate) type H = Result<(), String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Running,
    Succeeded,
    Failed(String),
}

impl Status {
    pub fn label(&self) -> String {
        match self {
            Status::Running => "running".into(),
            Status::Succeeded => "success".into(),
            Status::Failed(r) => format!("failure: {r}"),
        }
    }
}

/// What the CBDC system does once a pending credit is decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Route {
    /// A wallet-to-wallet transfer; the initiator gets a TransferResult.
    Transfer,
    /// A mint against an instant payment into the backing account; a
    /// rejection returns the funds to `return_to`.
    FpsMint { return_to: AccountId },
    /// A mint against a deferred-settlement obligation.
    EpsMint,
}

#[derive(Debug, Clone)]
pub(crate) struct PendingCtx {
    pub initiator: ParticipantId,
    pub route: Route,
    pub phase: Option<Slot>,
    pub fields: Fields,
    /// Sealed sections to pass on once the credit completes.
    pub sealed: Vec<SealedSection>,
}

/// PIP-side lock events and ledger payment calls, in the order they happened.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LockEvent {
    Placed { lock: LockId, pip: ParticipantId, wallet: WalletId, amount: Money },
    Ended { lock: LockId },
    /// Index into the ledger's payment calls.
    Call(usize),
}

pub(crate) struct Sim {
    pub w: World,
    pub sc: Scenario,
    pub payer: ParticipantId,
    pub payee: ParticipantId,
    pub now: Tick,
    pub status: Status,
    queue: BTreeMap<ParticipantId, VecDeque<Message>>,
    pub delivered: Vec<(Tick, Message)>,
    pub lines: Vec<String>,
    script: Vec<ScriptEvent>,
    pub routing_errors: Vec<String>,
    pub faults: Vec<String>,
    pub breaches: Vec<String>,
    /// Per phase and balance key: (running delta, peak absolute delta).
    pub phase_liq: BTreeMap<Option<Slot>, BTreeMap<String, (i128, i128)>>,
    ledger_cursor: usize,
    rail_cursor: usize,
    calls_seen: usize,
    pub pending: BTreeMap<PendingCreditId, PendingCtx>,
    /// Sealed sections a participant holds on to, by reference.
    pub held: BTreeMap<(ParticipantId, String), Vec<SealedSection>>,
    pub batch_phase: BTreeMap<BatchId, Option<Slot>>,
    requested: BTreeSet<BatchId>,
    pub timeline: Vec<LockEvent>,
    pub reserves: u128,
    pub start_positions: BTreeMap<ParticipantId, i128>,
    pub start_balances: BTreeMap<String, Money>,
    pub start_available: Money,
    pub start_issued: i128,
    pub aborted: Option<EngineError>,
}

// Field accessors for handlers.

pub(crate) fn text<'m>(m: &'m Message, k: &str) -> Result<&'m str, String> {
    m.text(k).ok_or_else(|| format!("{} without `{k}`", m.kind))
}

pub(crate) fn amount(m: &Message, k: &str) -> Result<Money, String> {
    m.amount(k).ok_or_else(|| format!("{} without `{k}`", m.kind))
}

pub(crate) fn parse_id<T: From<u32>>(s: &str) -> Option<T> {
    s.rsplit_once('-')?.1.parse::<u32>().ok().map(T::from)
}

pub(crate) fn id<T: From<u32>>(m: &Message, k: &str) -> Result<T, String> {
    parse_id(text(m, k)?).ok_or_else(|| format!("{}: bad id in `{k}`", m.kind))
}

pub(crate) fn opt_id<T: From<u32>>(m: &Message, k: &str) -> Option<T> {
    m.text(k).and_then(parse_id)
}

pub(crate) fn datum(m: &Message, k: &str) -> Result<PersonalDatum, String> {
    m.datum(k).cloned().ok_or_else(|| format!("{} without `{k}`", m.kind))
}

pub(crate) fn ok_flag(m: &Message) -> bool {
    m.text("ok") == Some("true")
}

impl Sim {
    fn new(w: World, sc: Scenario, payer: ParticipantId, payee: ParticipantId) -> Sim {
        let script = sc.script.clone();
        let reserves = w.rail.total_settlement();
        let start_positions = w.positions();
        let start_balances = w.balances();
        let ledger_cursor = w.ledger.journal().len();
        let rail_cursor = w.rail.journal().len();
        let mut sim = Sim {
            w,
            sc,
            payer,
            payee,
            now: 0,
            status: Status::Running,
            queue: BTreeMap::new(),
            delivered: Vec::new(),
            lines: Vec::new(),
            script,
            routing_errors: Vec::new(),
            faults: Vec::new(),
            breaches: Vec::new(),
            phase_liq: BTreeMap::new(),
            ledger_cursor,
            rail_cursor,
            calls_seen: 0,
            pending: BTreeMap::new(),
            held: BTreeMap::new(),
            batch_phase: BTreeMap::new(),
            requested: BTreeSet::new(),
            timeline: Vec::new(),
            reserves,
            start_positions,
            start_balances,
            start_available: Money::ZERO,
            start_issued: 0,
            aborted: None,
        };
        sim.start_available = sim.available_of(payer);
        sim.start_issued = issued(&sim.w);
        sim
    }

    pub fn use_case(&self) -> UseCase {
        self.sc.use_case
    }

    pub fn binding(&self, slot: Slot) -> u8 {
        self.w.bindings.get(slot).expect("validated before the run")
    }

    pub fn available_of(&self, p: ParticipantId) -> Money {
        match self.w.part(p).wallet {
            Some(wallet) => self.w.ledger.available(wallet).unwrap_or(Money::ZERO),
            None => Money::ZERO,
        }
    }

    // Participant local stores.

    pub fn keep(&mut self, p: ParticipantId, k: &str, v: FieldValue) {
        self.w.part_mut(p).remember(k, v);
    }

    pub fn keep_text(&mut self, p: ParticipantId, k: &str, v: impl ToString) {
        self.keep(p, k, FieldValue::Text(v.to_string()));
    }

    pub fn keep_datum(&mut self, p: ParticipantId, k: &str, d: PersonalDatum) {
        self.keep(p, k, FieldValue::Datum(d));
    }

    pub fn kept_text(&self, p: ParticipantId, k: &str) -> Option<String> {
        match self.w.part(p).recall(k) {
            Some(FieldValue::Text(t)) => Some(t.clone()),
            _ => None,
        }
    }

    pub fn kept_id<T: From<u32>>(&self, p: ParticipantId, k: &str) -> Option<T> {
        self.kept_text(p, k).as_deref().and_then(parse_id)
    }

    pub fn kept_datum(&self, p: ParticipantId, k: &str) -> Option<PersonalDatum> {
        match self.w.part(p).recall(k) {
            Some(FieldValue::Datum(d)) => Some(d.clone()),
            _ => None,
        }
    }

    pub fn need_datum(&self, p: ParticipantId, k: &str) -> Result<PersonalDatum, String> {
        self.kept_datum(p, k).ok_or_else(|| format!("{} holds no `{k}`", self.w.name_of(p)))
    }

    pub fn need_id<T: From<u32>>(&self, p: ParticipantId, k: &str) -> Result<T, String> {
        self.kept_id(p, k).ok_or_else(|| format!("{} holds no `{k}`", self.w.name_of(p)))
    }

    // Script.

    fn take(&mut self, pick: impl Fn(&ScriptEvent) -> bool) -> Option<ScriptEvent> {
        let i = self.script.iter().position(pick)?;
        Some(self.script.remove(i))
    }

    pub fn take_authorise(&mut self) -> Decision {
        match self.take(|e| matches!(e, ScriptEvent::Authorise(_))) {
            Some(ScriptEvent::Authorise(d)) => d,
            _ => Decision::Approve,
        }
    }

    pub fn take_payee_pip(&mut self) -> Decision {
        match self.take(|e| matches!(e, ScriptEvent::PayeePip(_))) {
            Some(ScriptEvent::PayeePip(d)) => d,
            _ => Decision::Approve,
        }
    }

    pub fn take_delivery(&mut self) -> Delivery {
        match self.take(|e| matches!(e, ScriptEvent::Delivery(_))) {
            Some(ScriptEvent::Delivery(d)) => d,
            _ => Delivery::Success,
        }
    }

    pub fn take_scheme_failure(&mut self) -> bool {
        self.take(|e| matches!(e, ScriptEvent::SchemeFailure)).is_some()
    }

    pub fn take_compliance(&mut self) -> Option<bool> {
        match self.take(|e| matches!(e, ScriptEvent::Compliance(_))) {
            Some(ScriptEvent::Compliance(b)) => Some(b),
            _ => None,
        }
    }

    // Bus.

    pub fn send(&mut self, from: ParticipantId, to: ParticipantId, kind: MsgKind, phase: Option<Slot>, body: Body) {
        let mid = self.w.ids.next();
        let mut env = Envelope::new(mid, from, to);
        env.plaintext = body.plain;
        env.sealed = body.forward;
        for (recipient, fields) in body.seal {
            let s = self.w.keys.seal(fields, from, recipient).expect("every participant holds a key");
            env.sealed.push(s);
        }
        self.queue.entry(from).or_default().push_back(Message { env, kind, phase });
    }

    /// Open every section of `m` addressed to its receiver and merge them.
    pub fn open(&mut self, m: &Message) -> Fields {
        let me = m.env.receiver;
        let mut out = Fields::new();
        for i in 0..m.env.sealed.len() {
            if m.env.sealed[i].recipient() != me {
                continue;
            }
            if let Ok(f) = self.w.keys.open_section(&m.env, i, me, &mut self.w.log) {
                out.extend(f.iter().map(|(k, v)| (k.clone(), v.clone())));
            }
        }
        out
    }

    pub fn hold(&mut self, p: ParticipantId, reference: &str, sections: &[SealedSection]) {
        self.held.entry((p, reference.to_string())).or_default().extend(sections.iter().cloned());
    }

    pub fn held_for(&self, p: ParticipantId, reference: &str) -> Vec<SealedSection> {
        self.held.get(&(p, reference.to_string())).cloned().unwrap_or_default()
    }

    // Case status.

    pub fn fail_case(&mut self, reason: impl Into<String>) {
        if self.status == Status::Running {
            self.status = Status::Failed(reason.into());
        }
    }

    fn update_status(&mut self, m: &Message) {
        if self.status != Status::Running {
            return;
        }
        let to = m.env.receiver;
        let uc = self.use_case();
        match m.kind {
            MsgKind::FundsReceived if to == self.payee && uc != UseCase::U3 => self.status = Status::Succeeded,
            MsgKind::HandOver if to == self.payer && uc == UseCase::U3 => self.status = Status::Succeeded,
            MsgKind::PaymentFailed if to == self.payer || to == self.payee => {
                let why = m.text("reason").unwrap_or("payment failed").to_string();
                self.status = Status::Failed(why);
            }
            MsgKind::LockCancelled if to == self.payer => {
                let why = m.text("reason").unwrap_or("lock cancelled").to_string();
                self.status = Status::Failed(why);
            }
            _ => {}
        }
    }

    // Failure reasons phrased in terms of roles.

    pub fn describe_ledger(&self, e: &crate::ledger::LedgerError) -> String {
        use crate::ledger::LedgerError as L;
        match e {
            L::InsufficientAvailable { wallet, .. } => {
                let who = self.w.wallet_owner(*wallet).map(|o| self.w.role(o).name()).unwrap_or("unknown");
                format!("insufficient funds in {who} wallet")
            }
            other => other.to_string(),
        }
    }

    pub fn describe_rail(&self, e: &crate::rail::RailError) -> String {
        use crate::rail::RailError as R;
        match e {
            R::InsufficientFunds { account, .. } => {
                let holder = self
                    .w
                    .rail
                    .settlement_account(*account)
                    .map(|a| a.holder)
                    .or_else(|| self.w.rail.customer_account(*account).map(|a| a.owner));
                let who = holder.map(|h| self.w.role(h).name()).unwrap_or("unknown");
                format!("insufficient reserves at {who}")
            }
            other => other.to_string(),
        }
    }

    // Journal and invariants.

    fn flush(&mut self) {
        let core: Vec<String> = self.w.ledger.journal()[self.ledger_cursor..].iter().map(|e| e.line()).collect();
        self.ledger_cursor = self.w.ledger.journal().len();
        let rail: Vec<String> = self.w.rail.journal()[self.rail_cursor..].iter().map(|e| e.line()).collect();
        self.rail_cursor = self.w.rail.journal().len();
        self.lines.extend(core);
        self.lines.extend(rail);
        let calls = self.w.ledger.payment_calls().len();
        for i in self.calls_seen..calls {
            self.timeline.push(LockEvent::Call(i));
        }
        self.calls_seen = calls;
    }

    fn check_step(&mut self, at: &str) {
        if let Err(e) = self.w.ledger.check_invariants() {
            self.breaches.push(format!("tick {} after {at}: {e}", self.now));
        }
        let total = self.w.rail.total_settlement();
        if total != self.reserves {
            self.breaches.push(format!("tick {} after {at}: reserves {} != {}", self.now, total, self.reserves));
        }
        if let Some(fmi) = self.w.one.fmi {
            let held = self.w.escrow.held();
            let bal = self.w.part(fmi).wallet.and_then(|w| self.w.ledger.wallet(w).ok()).map(|w| w.ledger_balance);
            if !held.is_zero() && bal.unwrap_or(Money::ZERO) < held {
                self.breaches.push(format!("tick {} after {at}: escrow {held} not backed by FMI wallet", self.now));
            }
        }
    }

    /// Balances of intermediaries: everyone but end users and the central
    /// bank, which issues rather than fronts liquidity.
    fn intermediary_balances(&self) -> BTreeMap<String, i128> {
        let mut out = BTreeMap::new();
        let counts = |p: ParticipantId| {
            let r = self.w.role(p);
            r != ParticipantRole::User && !r.is_central_bank()
        };
        for a in self.w.rail.settlement_accounts() {
            if counts(a.holder) {
                out.insert(a.id.to_string(), a.balance.signed());
            }
        }
        for wal in self.w.ledger.wallets() {
            if counts(wal.owner) {
                out.insert(wal.id.to_string(), wal.ledger_balance.signed());
            }
        }
        out
    }

    fn record_liquidity(&mut self, phase: Option<Slot>, before: &BTreeMap<String, i128>) {
        let after = self.intermediary_balances();
        let slot = self.phase_liq.entry(phase).or_default();
        for (k, v) in after {
            let d = v - before.get(&k).copied().unwrap_or(0);
            if d == 0 {
                continue;
            }
            let e = slot.entry(k).or_insert((0, 0));
            e.0 += d;
            e.1 = e.1.max(e.0.abs());
        }
    }

    fn deliver(&mut self, m: Message) {
        let to = m.env.receiver;
        let role = self.w.role(to);
        let pip = self.w.part(to).pip_capable;
        self.lines.push(format!(
            "{}|{}|{}|{}|{}|{}",
            self.now,
            m.env.id,
            self.w.role(m.sender()),
            role,
            m.kind,
            m.env.sealed.len()
        ));
        if !admits(role, pip, m.kind) {
            let e = format!("{} may not process {}", role, m.kind);
            self.lines.push(format!("ERR|{}|{}|{}", self.now, m.env.id, e));
            self.routing_errors.push(format!("{}: {e}", m.env.id));
            self.fail_case(format!("routing error: {e}"));
        } else {
            let before = self.intermediary_balances();
            if let Err(e) = self.dispatch(&m) {
                self.lines.push(format!("ERR|{}|{}|{}", self.now, m.env.id, e));
                self.faults.push(format!("{}: {e}", m.env.id));
                self.fail_case(format!("protocol error: {e}"));
            }
            self.record_liquidity(m.phase, &before);
            self.update_status(&m);
        }
        self.flush();
        self.check_step(&m.env.id.to_string());
        self.delivered.push((self.now, m));
    }

    // Timers.

    fn timers(&mut self, t: Tick) {
        let before = self.intermediary_balances();
        for lock in self.w.ledger.expire_locks(t) {
            if let Err(e) = self.ledger_lock_expired(lock) {
                self.faults.push(e);
            }
        }
        let pips: Vec<ParticipantId> = self.w.pip_locks.keys().copied().collect();
        for pip in pips {
            let due = self.w.pip_locks.get_mut(&pip).expect("present").expire(t);
            for lock in due {
                self.timeline.push(LockEvent::Ended { lock });
                if let Err(e) = self.pip_lock_ended(pip, lock, "lock expired") {
                    self.faults.push(e);
                }
            }
        }
        for lock in self.w.escrow.due(t) {
            if let Err(e) = self.escrow_refund(lock, "lock expired") {
                self.faults.push(e);
            }
        }
        for r in self.w.ledger.expire_pending(t) {
            if let Err(e) = self.credit_rejected(r) {
                self.faults.push(e);
            }
        }
        let due: Vec<(BatchId, Option<Slot>)> = self
            .w
            .eps
            .batches()
            .iter()
            .filter(|b| b.state == crate::netting::BatchState::Open && b.window.1 <= t && !self.requested.contains(&b.id))
            .map(|b| (b.id, self.batch_phase.get(&b.id).copied().flatten()))
            .collect();
        for (b, phase) in due {
            self.requested.insert(b);
            if let (Some(eps), Some(rtgs)) = (self.w.one.eps, self.w.one.rtgs) {
                self.send(eps, rtgs, MsgKind::NetSettlement, phase, Body::new().text("batch", b));
            }
        }
        self.record_liquidity(None, &before);
        self.flush();
        self.check_step("timers");
    }

    fn next_deadline(&self) -> Option<Tick> {
        let mut d: Vec<Tick> = Vec::new();
        d.extend(self.w.ledger.locks().filter(|l| l.state == crate::ledger::LockState::Active).map(|l| l.expiry + 1));
        for book in self.w.pip_locks.values() {
            d.extend(
                book.locks().filter(|l| l.state == crate::participants::PipLockState::Active).map(|l| l.expiry + 1),
            );
        }
        d.extend(
            self.w.escrow.records().filter(|r| r.state == crate::participants::EscrowState::Active).map(|r| r.expiry + 1),
        );
        let timeout = self.pending_timeout();
        d.extend(
            self.w
                .ledger
                .pending()
                .filter(|p| p.state == crate::ledger::PendingState::AwaitingPipConfirmation)
                .map(|p| p.opened_at + timeout + 1),
        );
        d.extend(
            self.w
                .eps
                .batches()
                .iter()
                .filter(|b| b.state == crate::netting::BatchState::Open && !self.requested.contains(&b.id))
                .map(|b| b.window.1),
        );
        d.into_iter().min()
    }

    fn pending_timeout(&self) -> Tick {
        self.w.pending_timeout
    }

    fn run_loop(&mut self) {
        self.start();
        self.flush();
        let budget = self.w.tick_budget;
        let mut t: Tick = 0;
        loop {
            if self.queue.values().all(VecDeque::is_empty) {
                match self.next_deadline() {
                    Some(d) => t = (t + 1).max(d),
                    None => break,
                }
            } else {
                t += 1;
            }
            if t > budget {
                self.aborted = Some(EngineError::BudgetExceeded { budget });
                self.fail_case("tick budget exceeded");
                return;
            }
            self.now = self.w.clock.advance_to(t);
            let batch = std::mem::take(&mut self.queue);
            self.timers(t);
            self.deliver_batch(batch, t);
        }
        if self.status == Status::Running {
            let detail = "no messages in flight and no timers pending".to_string();
            self.aborted = Some(EngineError::Deadlock { tick: self.now, detail: detail.clone() });
            self.fail_case(format!("deadlock: {detail}"));
        }
    }

    fn deliver_batch(&mut self, mut batch: BTreeMap<ParticipantId, VecDeque<Message>>, t: Tick) {
        batch.retain(|_, q| !q.is_empty());
        let senders: Vec<ParticipantId> = batch.keys().copied().collect();
        if senders.is_empty() {
            return;
        }
        let n = senders.len();
        let mut i = ((self.w.seed.wrapping_add(t)) % n as u64) as usize;
        let mut left: usize = batch.values().map(VecDeque::len).sum();
        while left > 0 {
            if let Some(m) = batch.get_mut(&senders[i]).and_then(VecDeque::pop_front) {
                left -= 1;
                self.deliver(m);
            }
            i = (i + 1) % n;
        }
    }

    // Start of a case.

    fn start(&mut self) {
        let sc = self.sc.clone();
        let purpose = PersonalDatum::new(self.payer, DatumKind::TransactionPurpose, sc.purpose.clone());
        let alias_subject = sc
            .alias
            .parse::<Alias>()
            .or_else(|_| Alias::mobile(&sc.alias))
            .ok()
            .and_then(|a| self.w.aliases.lookup(&a).ok().map(|e| e.owner))
            .unwrap_or(if sc.use_case == UseCase::U1 { self.payee } else { self.payer });
        let alias = PersonalDatum::new(alias_subject, DatumKind::PhoneAlias, sc.alias.clone());
        match sc.use_case {
            UseCase::U1 => {
                let acct = self.w.part(self.payer).account.expect("validated");
                let bank = self.w.rail.customer_account(acct).expect("validated").bank;
                let body = Body::new()
                    .datum("alias", alias)
                    .datum("purpose_text", purpose)
                    .amount("amount", sc.amount)
                    .text("ref", &sc.reference);
                self.send(self.payer, bank, MsgKind::PayInit, None, body);
            }
            UseCase::U2 | UseCase::U3 => {
                let acquirer = self.w.id(sc.acquirer.as_deref().unwrap_or_default()).expect("validated");
                let acct = self.w.part(self.payee).account.expect("validated");
                let a = self.w.rail.customer_account(acct).expect("validated");
                let details = PersonalDatum::new(self.payee, DatumKind::AccountDetails, format!("{}-{}", a.sort_code, a.number));
                let bank = a.bank;
                let mut body = Body::new()
                    .datum("alias", alias)
                    .datum("merchant_name", self.w.name_datum(self.payee))
                    .datum("merchant_account", details)
                    .text("merchant_bank", bank)
                    .amount("amount", sc.amount)
                    .text("ref", &sc.reference);
                let kind = if sc.use_case == UseCase::U2 {
                    MsgKind::RequestToPayInit
                } else {
                    body = body.text("expiry", sc.expiry);
                    MsgKind::RequestToLockInit
                };
                self.send(self.payee, acquirer, kind, None, body);
            }
        }
    }

    // Rejections of pending credits, from a PIP or from the timeout.

    pub fn credit_rejected(&mut self, r: Rejection) -> H {
        let ctx = self.pending.remove(&r.pending);
        let cbdc = self.w.one.cbdc;
        let Some(ctx) = ctx else {
            return Err(format!("no context for rejected credit {}", r.pending));
        };
        let reason = if r.reason == "confirmation timeout" || r.reason == "holding limit" {
            r.reason.clone()
        } else {
            "payee PIP rejected".to_string()
        };
        let reference = match ctx.fields.get("ref") {
            Some(FieldValue::Text(t)) => t.clone(),
            _ => String::new(),
        };
        match ctx.route {
            Route::Transfer if ctx.initiator == cbdc => {}
            Route::Transfer => {
                let body = Body::new().text("ref", &reference).text("ok", false).text("reason", &reason).amount("amount", r.amount);
                let body = copy_fields(body, &ctx.fields, &["use", "lock"]);
                self.send(cbdc, ctx.initiator, MsgKind::TransferResult, ctx.phase, body);
            }
            Route::FpsMint { return_to } => {
                let backing = self.w.rail.backing().ok_or("no backing account")?;
                self.fps_send(cbdc, backing, return_to, r.amount, "return", &reference, Some(&reason), ctx.phase, Body::new())?;
            }
            Route::EpsMint => {
                let eps = self.w.one.eps.ok_or("no EPS")?;
                let body = Body::new().text("ref", &reference).text("ok", false).text("reason", &reason).amount("amount", r.amount);
                self.send(cbdc, eps, MsgKind::EpsCreditResult, ctx.phase, body);
            }
        }
        Ok(())
    }

    /// Instruct an instant payment from `from` to account `to`.
    #[allow(clippy::too_many_arguments)]
    pub fn fps_send(
        &mut self,
        sender: ParticipantId,
        from: AccountId,
        to: AccountId,
        amount: Money,
        purpose: &str,
        reference: &str,
        reason: Option<&str>,
        phase: Option<Slot>,
        extra: Body,
    ) -> H {
        let fps = self.w.one.fps.ok_or("world has no FPS scheme")?;
        let (sort, number) = self.w.rail.address(to).map_err(|e| e.to_string())?;
        let mut body = extra
            .text("from", from)
            .text("to_sort", sort)
            .text("to_number", number)
            .amount("amount", amount)
            .text("purpose", purpose)
            .text("ref", reference);
        if let Some(r) = reason {
            body = body.text("reason", r);
        }
        self.send(sender, fps, MsgKind::FpsPayment, phase, body);
        Ok(())
    }

    /// The min-available value `pip` must pass for payments from `wallet`.
    pub fn min_for(&self, pip: ParticipantId, wallet: WalletId) -> Money {
        self.w.pip_lock_sum(pip, wallet)
    }

    fn finish(mut self) -> RunOutput {
        // Closing balances and issuance.
        for (k, v) in self.w.balances() {
            let class = balance_class(&self.w, &k);
            self.lines.push(format!("BAL|{k}|{class}|{v}"));
        }
        self.lines.push(format!("BAL|issued|-|{}", issued(&self.w)));
        let exposure = scan(&self.w, &self.delivered, None);
        let report = report::build(&self);
        let liquidity = self
            .phase_liq
            .iter()
            .map(|(p, m)| (*p, m.values().map(|v| v.1).max().unwrap_or(0) as u64))
            .collect();
        let names = self.w.parts.iter().map(|(k, v)| (*k, v.name.clone())).collect();
        RunOutput {
            status: self.status.clone(),
            ticks: self.now,
            trace: self.lines,
            report,
            exposure,
            liquidity,
            faults: self.faults,
            aborted: self.aborted,
            edges_by_phase: edges(&self.w, &self.delivered),
            delivered: self.delivered,
            names,
            timeline: self.timeline,
            world: self.w,
        }
    }
}

pub(crate) fn copy_fields(mut body: Body, from: &Fields, keys: &[&str]) -> Body {
    for k in keys {
        if let Some(v) = from.get(*k) {
            body.plain.insert(k.to_string(), v.clone());
        }
    }
    body
}

fn issued(w: &World) -> i128 {
    w.ledger.minted().signed() - w.ledger.burned().signed()
}

fn balance_class(w: &World, key: &str) -> &'static str {
    if key.starts_with("W-") {
        return "W";
    }
    match parse_id::<AccountId>(key) {
        Some(a) if w.rail.settlement_account(a).is_some() => "S",
        _ => "C",
    }
}

/// Exposure report over the delivered messages of `phase` (all when `None`).
pub(crate) fn scan(w: &World, delivered: &[(Tick, Message)], phase: Option<Slot>) -> ExposureReport {
    let items = delivered.iter().filter(|(_, m)| phase.is_none() || m.phase == phase).map(|(_, m)| ScanItem {
        envelope: &m.env,
        sender_role: w.role(m.env.sender),
        receiver_role: w.role(m.env.receiver),
    });
    let mut report = taint_scan(items, &w.log);
    for st in w.parts.values() {
        if let Some(op) = st.operator {
            report.set_operator(st.id, w.role(op));
        }
    }
    report
}

/// A directed hop on the bus, by participant name.
pub type Edge = (String, String, String);

fn edges(w: &World, delivered: &[(Tick, Message)]) -> BTreeMap<Option<Slot>, BTreeSet<Edge>> {
    let mut out: BTreeMap<Option<Slot>, BTreeSet<Edge>> = BTreeMap::new();
    for (_, m) in delivered {
        out.entry(m.phase).or_default().insert((
            w.name_of(m.env.sender).to_string(),
            w.name_of(m.env.receiver).to_string(),
            m.kind.to_string(),
        ));
    }
    out
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub status: Status,
    pub ticks: Tick,
    pub trace: Vec<String>,
    pub report: PostconditionReport,
    pub exposure: ExposureReport,
    /// Peak intermediary liquidity per phase.
    pub liquidity: BTreeMap<Option<Slot>, u64>,
    pub faults: Vec<String>,
    /// Set when the run stopped on a deadlock or the tick budget.
    pub aborted: Option<EngineError>,
    pub edges_by_phase: BTreeMap<Option<Slot>, BTreeSet<Edge>>,
    pub delivered: Vec<(Tick, Message)>,
    pub names: BTreeMap<ParticipantId, String>,
    /// PIP lock events interleaved with the ledger's payment calls.
    pub timeline: Vec<LockEvent>,
    pub world: World,
}

impl RunOutput {
    pub fn trace_text(&self) -> String {
        let mut s = self.trace.join("\n");
        s.push('\n');
        s
    }

    pub fn exposure_in(&self, phase: Slot) -> ExposureReport {
        scan(&self.world, &self.delivered, Some(phase))
    }

    /// Messages delivered in `phase`.
    pub fn hops_in(&self, phase: Slot) -> usize {
        self.delivered.iter().filter(|(_, m)| m.phase == Some(phase)).count()
    }

    pub fn edges_in(&self, phase: Slot) -> BTreeSet<Edge> {
        self.edges_by_phase.get(&Some(phase)).cloned().unwrap_or_default()
    }

    /// Distinct sender and receiver role pairs in `phase`, rendered
    /// `Sender->Receiver` and sorted.
    pub fn role_edges_in(&self, phase: Slot) -> BTreeSet<String> {
        self.delivered
            .iter()
            .filter(|(_, m)| m.phase == Some(phase))
            .map(|(_, m)| format!("{}->{}", self.world.role(m.env.sender), self.world.role(m.env.receiver)))
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

fn invalid(msg: impl Into<String>) -> EngineError {
    EngineError::Invalid(msg.into())
}

fn prepare(cfg: &WorldConfig, sc: &Scenario, seed: Option<u64>) -> Result<Sim, EngineError> {
    let mut cfg = cfg.clone();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let w = World::build(&cfg, &sc.bindings)?;
    if let Some(slot) = w.bindings.missing(sc.use_case) {
        return Err(invalid(format!("binding for slot {slot} is empty")));
    }
    if sc.use_case == UseCase::U3 && !w.bindings.lock_holders_agree() {
        return Err(invalid(format!(
            "U3.S2=D{} and U3.S3=D{} disagree on who holds the lock",
            w.bindings.get(Slot::U3S2).unwrap_or(0),
            w.bindings.get(Slot::U3S3).unwrap_or(0)
        )));
    }
    let find = |name: &str, what: &str| w.id(name).ok_or_else(|| invalid(format!("scenario {what} `{name}` is not a participant")));
    let payer = find(&sc.payer, "payer")?;
    let payee = find(&sc.payee, "payee")?;
    let need = |ok: bool, msg: String| if ok { Ok(()) } else { Err(invalid(msg)) };
    match sc.use_case {
        UseCase::U1 => {
            need(w.part(payer).account.is_some(), format!("payer `{}` has no bank account", sc.payer))?;
            need(w.part(payee).wallet.is_some(), format!("payee `{}` has no wallet", sc.payee))?;
        }
        UseCase::U2 | UseCase::U3 => {
            need(w.part(payer).wallet.is_some(), format!("payer `{}` has no wallet", sc.payer))?;
            need(w.part(payee).account.is_some(), format!("payee `{}` has no bank account", sc.payee))?;
            let acq = sc.acquirer.as_deref().ok_or_else(|| invalid("scenario has no acquirer"))?;
            let acq = find(acq, "acquirer")?;
            need(w.role(acq) == ParticipantRole::Acquirer, format!("`{}` is not an Acquirer", w.name_of(acq)))?;
            if sc.use_case == UseCase::U3 {
                let d = sc.delivery_agent.as_deref().ok_or_else(|| invalid("scenario has no delivery_agent"))?;
                let d = find(d, "delivery agent")?;
                need(w.role(d) == ParticipantRole::DeliveryAgent, format!("`{}` is not a DeliveryAgent", w.name_of(d)))?;
            }
        }
    }
    Ok(Sim::new(w, sc.clone(), payer, payee))
}

/// Check that a world and scenario can run together.
pub fn validate(cfg: &WorldConfig, sc: &Scenario) -> Result<(), EngineError> {
    prepare(cfg, sc, None).map(|_| ())
}

/// Run `sc` in a fresh world built from `cfg`. `seed` overrides the world's.
/// Runtime failures (deadlock, tick budget) are reported in the output; only
/// configuration problems are errors.
pub fn run(cfg: &WorldConfig, sc: &Scenario, seed: Option<u64>) -> Result<RunOutput, EngineError> {
    let mut sim = prepare(cfg, sc, seed)?;
    sim.lines.push(format!("SEED|{}", sim.w.seed));
    for (k, v) in sim.w.balances() {
        let class = balance_class(&sim.w, &k);
        sim.lines.push(format!("OPEN|{k}|{class}|{v}"));
    }
    sim.lines.push(format!("OPEN|issued|-|{}", issued(&sim.w)));
    sim.run_loop();
    Ok(sim.finish())
}
