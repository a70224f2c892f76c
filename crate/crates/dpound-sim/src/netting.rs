//! Deferred net settlement for the enhanced payment system.
//!
//! Obligations accumulate in a fixed-length window. At window close they are
//! netted to one position per participant and the positions are applied to
//! RTGS settlement accounts in a single step.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::domain::Tick;
use crate::ids::{AccountId, BatchId, IdSource, ParticipantId};
use crate::money::Money;
use crate::rail::{Rail, RailError, RailTag};

pub const DEFAULT_BATCH_WINDOW: Tick = 50;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NettingError {
    /// A net debtor cannot cover its position. The batch stays netted but
    /// unsettled and counts as realised settlement risk.
    #[error("net debtor {participant} short: owes {owes}, holds {holds}")]
    InsufficientSettlementFunds { participant: ParticipantId, owes: Money, holds: Money },
    #[error("participant {0} has no settlement account")]
    NoSettlementAccount(ParticipantId),
    #[error("batch {0} is not open")]
    NotOpen(BatchId),
    #[error("participant {0} is not onboarded to the enhanced payment system")]
    NotOnboarded(ParticipantId),
    #[error(transparent)]
    Rail(#[from] RailError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Obligation {
    pub debtor: ParticipantId,
    pub creditor: ParticipantId,
    pub amount: Money,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchState {
    Open,
    Netted,
    Settled,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetSettlementBatch {
    pub id: BatchId,
    pub window: (Tick, Tick),
    pub obligations: Vec<Obligation>,
    pub state: BatchState,
    pub net: BTreeMap<ParticipantId, i128>,
}

/// Per-participant net position: positive means the participant receives.
pub fn net_positions(obligations: &[Obligation]) -> BTreeMap<ParticipantId, i128> {
    let mut net: BTreeMap<ParticipantId, i128> = BTreeMap::new();
    for o in obligations {
        *net.entry(o.debtor).or_default() -= o.amount.pence() as i128;
        *net.entry(o.creditor).or_default() += o.amount.pence() as i128;
    }
    net.retain(|_, v| *v != 0);
    net
}

/// Bilateral netting: one obligation per ordered pair, in the direction of
/// the larger gross flow.
pub fn net_pairwise(obligations: &[Obligation]) -> Vec<Obligation> {
    let mut pairs: BTreeMap<(ParticipantId, ParticipantId), i128> = BTreeMap::new();
    for o in obligations {
        let (key, sign) = if o.debtor < o.creditor { ((o.debtor, o.creditor), 1) } else { ((o.creditor, o.debtor), -1) };
        *pairs.entry(key).or_default() += sign * o.amount.pence() as i128;
    }
    pairs
        .into_iter()
        .filter(|(_, v)| *v != 0)
        .map(|((a, b), v)| {
            if v > 0 {
                Obligation { debtor: a, creditor: b, amount: Money::new(v as u64) }
            } else {
                Obligation { debtor: b, creditor: a, amount: Money::new((-v) as u64) }
            }
        })
        .collect()
}

impl NetSettlementBatch {
    pub fn new(id: BatchId, start: Tick, window: Tick) -> Self {
        NetSettlementBatch {
            id,
            window: (start, start + window),
            obligations: Vec::new(),
            state: BatchState::Open,
            net: BTreeMap::new(),
        }
    }

    pub fn gross(&self) -> Money {
        Money::new(self.obligations.iter().map(|o| o.amount.pence()).sum())
    }
}

/// Net `batch` and apply the positions to settlement accounts. `account_of`
/// maps participants to their settlement account.
pub fn settle_batch(
    rail: &mut Rail,
    tick: Tick,
    batch: &mut NetSettlementBatch,
    account_of: &dyn Fn(ParticipantId) -> Option<AccountId>,
) -> Result<(), NettingError> {
    if batch.state == BatchState::Settled {
        return Err(NettingError::NotOpen(batch.id));
    }
    batch.net = net_positions(&batch.obligations);
    batch.state = BatchState::Netted;
    let mut postings: Vec<(AccountId, i128)> = Vec::new();
    for (&p, &pos) in &batch.net {
        let account = account_of(p).ok_or(NettingError::NoSettlementAccount(p))?;
        if pos < 0 {
            let holds = rail.balance(account)?;
            let owes = Money::new((-pos) as u64);
            if holds < owes {
                return Err(NettingError::InsufficientSettlementFunds { participant: p, owes, holds });
            }
        }
        postings.push((account, pos));
    }
    // Debits first so no account dips below zero mid-way.
    postings.sort_by_key(|&(a, pos)| (pos >= 0, a));
    for (account, pos) in postings {
        rail.post_net(tick, account, pos, batch.id)?;
    }
    batch.state = BatchState::Settled;
    Ok(())
}

impl Rail {
    fn post_net(&mut self, tick: Tick, account: AccountId, delta: i128, batch: BatchId) -> Result<(), RailError> {
        if delta == 0 {
            return Ok(());
        }
        if self.settlement_account(account).is_none() {
            return Err(RailError::UnknownAccount(account));
        }
        let amount = Money::new(delta.unsigned_abs() as u64);
        let kind = if delta < 0 { "NetDebit" } else { "NetCredit" };
        self.apply_net(account, delta)?;
        self.record_entry(RailTag::Rtgs, tick, kind, account, amount, batch.to_string());
        Ok(())
    }
}

/// Onboarding and batching state of the enhanced payment system.
#[derive(Debug, Clone)]
pub struct EnhancedPaymentSystem {
    onboarded: BTreeSet<ParticipantId>,
    window: Tick,
    batches: Vec<NetSettlementBatch>,
}

impl EnhancedPaymentSystem {
    pub fn new(window: Tick) -> Self {
        EnhancedPaymentSystem { onboarded: BTreeSet::new(), window: window.max(1), batches: Vec::new() }
    }

    /// Onboarding includes the key exchange; the caller registers the key.
    pub fn onboard(&mut self, p: ParticipantId) {
        self.onboarded.insert(p);
    }

    pub fn is_onboarded(&self, p: ParticipantId) -> bool {
        self.onboarded.contains(&p)
    }

    pub fn require_onboarded(&self, parties: &[ParticipantId]) -> Result<(), NettingError> {
        match parties.iter().find(|p| !self.onboarded.contains(p)) {
            Some(&p) => Err(NettingError::NotOnboarded(p)),
            None => Ok(()),
        }
    }

    pub fn batches(&self) -> &[NetSettlementBatch] {
        &self.batches
    }

    /// Append to the batch whose window covers `now`, opening one if needed.
    pub fn append(&mut self, ids: &mut IdSource, now: Tick, obligation: Obligation) -> BatchId {
        let open = self
            .batches
            .iter_mut()
            .find(|b| b.state == BatchState::Open && b.window.0 <= now && now < b.window.1);
        match open {
            Some(b) => {
                b.obligations.push(obligation);
                b.id
            }
            None => {
                let start = now - now % self.window;
                let mut b = NetSettlementBatch::new(ids.next(), start, self.window);
                b.obligations.push(obligation);
                let id = b.id;
                self.batches.push(b);
                id
            }
        }
    }

    /// Settle every open batch whose window has closed by `now` (all open
    /// batches when `force`). Returns the ids settled and any failures.
    pub fn close_due(
        &mut self,
        rail: &mut Rail,
        now: Tick,
        force: bool,
        account_of: &dyn Fn(ParticipantId) -> Option<AccountId>,
    ) -> (Vec<BatchId>, Vec<(BatchId, NettingError)>) {
        let mut settled = Vec::new();
        let mut failed = Vec::new();
        for b in self.batches.iter_mut().filter(|b| b.state == BatchState::Open) {
            if force || now >= b.window.1 {
                match settle_batch(rail, now, b, account_of) {
                    Ok(()) => settled.push(b.id),
                    Err(e) => failed.push((b.id, e)),
                }
            }
        }
        (settled, failed)
    }

    /// Settle one batch, whatever its window.
    pub fn settle_one(
        &mut self,
        rail: &mut Rail,
        now: Tick,
        id: BatchId,
        account_of: &dyn Fn(ParticipantId) -> Option<AccountId>,
    ) -> Result<(), NettingError> {
        let b = self.batches.iter_mut().find(|b| b.id == id).ok_or(NettingError::NotOpen(id))?;
        settle_batch(rail, now, b, account_of)
    }

    /// Obligations in batches that were netted but could not settle.
    pub fn unsettled(&self) -> Vec<&NetSettlementBatch> {
        self.batches.iter().filter(|b| b.state != BatchState::Settled).collect()
    }
}
