//! The CBDC core ledger: wallets, issuance, transfers with payee-PIP
//! confirmation, ledger-held locks and holding limits.
//!
//! Transfers are two-phase. The debit side is taken from the source wallet
//! when the transfer is accepted and held in suspense on the pending credit;
//! the journal records the `Transfer` only once the payee's PIP approves.
//! A rejection or timeout puts the suspense back on the source wallet.
//! Issuance conservation is therefore
//! `sum(balances) + sum(suspense) = sum(Mint) - sum(Burn)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::domain::Tick;
use crate::ids::{AccountId, IdSource, LockId, MessageId, ParticipantId, PendingCreditId, WalletId};
use crate::money::{Money, MoneyError};

pub const DEFAULT_PENDING_TIMEOUT: Tick = 100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("participant {0} may not manage wallets")]
    UnknownParticipant(ParticipantId),
    #[error("technical wallets cannot carry a holding limit")]
    TechnicalWithLimit,
    #[error("unknown wallet {0}")]
    UnknownWallet(WalletId),
    #[error("unknown pending credit {0}")]
    UnknownPending(PendingCreditId),
    #[error("unknown lock {0}")]
    UnknownLock(LockId),
    #[error("{by} does not manage wallet {wallet}")]
    WrongPip { wallet: WalletId, by: ParticipantId },
    #[error("{by} is not authorised to move funds from {wallet}")]
    Unauthorised { wallet: WalletId, by: ParticipantId },
    #[error("pending credit {0} already decided")]
    AlreadyDecided(PendingCreditId),
    #[error("wallet {0} has no linked bank account for waterfall")]
    NoLinkedAccount(WalletId),
    #[error("wallet {wallet}: ledger {ledger} - amount {amount} - locks {locks} < minimum {minimum}")]
    InsufficientAvailable { wallet: WalletId, ledger: Money, amount: Money, locks: Money, minimum: Money },
    #[error("lock {0} is not active")]
    LockNotActive(LockId),
    #[error("amount must be positive")]
    ZeroAmount,
    #[error(transparent)]
    Money(#[from] MoneyError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Wallet {
    pub id: WalletId,
    pub owner: ParticipantId,
    pub managing_pip: ParticipantId,
    pub ledger_balance: Money,
    pub holding_limit: Option<Money>,
    pub technical: bool,
    pub linked_bank_account: Option<AccountId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Beneficiary {
    Account(AccountId),
    Wallet(WalletId),
}

impl fmt::Display for Beneficiary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Beneficiary::Account(a) => write!(f, "{a}"),
            Beneficiary::Wallet(w) => write!(f, "{w}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LockState {
    Active,
    Released,
    Expired,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerLock {
    pub id: LockId,
    pub wallet: WalletId,
    pub amount: Money,
    pub beneficiary: Beneficiary,
    pub expiry: Tick,
    pub state: LockState,
}

/// Where the funds behind a pending credit came from, so a rejection knows
/// where to send them back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FundingSource {
    /// Rail funds already received on the given account (mints).
    Rail(AccountId),
    /// Funds held in suspense from another wallet (transfers).
    Wallet(WalletId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PendingState {
    AwaitingPipConfirmation,
    Completed,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingCredit {
    pub id: PendingCreditId,
    pub target_wallet: WalletId,
    pub amount: Money,
    pub source: FundingSource,
    pub envelope_ref: MessageId,
    pub state: PendingState,
    pub opened_at: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Approve,
    Reject(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitMode {
    Reject,
    Waterfall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitOutcome {
    FullCredit,
    PartialWithWaterfall { credit: Money, excess: Money },
    Rejected,
}

/// A credit that reached a wallet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub pending: Option<PendingCreditId>,
    pub wallet: WalletId,
    pub owner: ParticipantId,
    pub amount: Money,
    /// Excess sent on to the linked bank account under waterfall.
    pub waterfall: Option<(AccountId, Money)>,
}

/// A credit that was refused; the funds go back to `source`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub pending: PendingCreditId,
    pub wallet: WalletId,
    pub amount: Money,
    pub source: FundingSource,
    pub envelope_ref: MessageId,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CreditOutcome {
    Pending(PendingCreditId),
    Completed(Completion),
    Rejected(Rejection),
}

/// Instruction emitted when funds leave the core ledger towards the rail.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RailInstruction {
    pub wallet: WalletId,
    pub amount: Money,
    pub target: Beneficiary,
}

/// What happens to funds released from a ledger lock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayTarget {
    /// Leave the core ledger (burn) for the lock's beneficiary account.
    Burn,
    /// Move to another wallet, e.g. an intermediary that pays out on the rail.
    Wallet(WalletId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EntryKind {
    Mint,
    Burn,
    Transfer,
    LockPlaced,
    LockReleased,
    LockExpired,
    LockCancelled,
}

impl EntryKind {
    pub fn name(self) -> &'static str {
        match self {
            EntryKind::Mint => "Mint",
            EntryKind::Burn => "Burn",
            EntryKind::Transfer => "Transfer",
            EntryKind::LockPlaced => "LockPlaced",
            EntryKind::LockReleased => "LockReleased",
            EntryKind::LockExpired => "LockExpired",
            EntryKind::LockCancelled => "LockCancelled",
        }
    }

    pub fn parse(s: &str) -> Option<EntryKind> {
        [
            EntryKind::Mint,
            EntryKind::Burn,
            EntryKind::Transfer,
            EntryKind::LockPlaced,
            EntryKind::LockReleased,
            EntryKind::LockExpired,
            EntryKind::LockCancelled,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JournalEntry {
    pub tick: Tick,
    pub kind: EntryKind,
    pub wallet: WalletId,
    pub amount: Money,
    pub counterparty: String,
}

impl JournalEntry {
    /// `tick|entry_kind|wallet|amount|counterparty`
    pub fn line(&self) -> String {
        format!("{}|{}|{}|{}|{}", self.tick, self.kind.name(), self.wallet, self.amount, self.counterparty)
    }
}

/// A core-ledger payment call as seen by the min-available replay checker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaymentCall {
    pub tick: Tick,
    pub wallet: WalletId,
    pub by: ParticipantId,
    pub amount: Money,
    pub min_available: Money,
    pub ledger_before: Money,
    pub locks_before: Money,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct CoreLedger {
    managers: BTreeSet<ParticipantId>,
    wallets: BTreeMap<WalletId, Wallet>,
    locks: BTreeMap<LockId, LedgerLock>,
    pending: BTreeMap<PendingCreditId, PendingCredit>,
    journal: Vec<JournalEntry>,
    payment_calls: Vec<PaymentCall>,
    minted: Money,
    burned: Money,
    limit_mode: LimitMode,
    pending_timeout: Tick,
}

impl CoreLedger {
    pub fn new(limit_mode: LimitMode, pending_timeout: Tick) -> Self {
        CoreLedger {
            managers: BTreeSet::new(),
            wallets: BTreeMap::new(),
            locks: BTreeMap::new(),
            pending: BTreeMap::new(),
            journal: Vec::new(),
            payment_calls: Vec::new(),
            minted: Money::ZERO,
            burned: Money::ZERO,
            limit_mode,
            pending_timeout,
        }
    }

    /// Allow `p` to manage wallets. Wallets owned by managers are treated as
    /// intermediary wallets and take credits without confirmation.
    pub fn register_manager(&mut self, p: ParticipantId) {
        self.managers.insert(p);
    }

    pub fn is_manager(&self, p: ParticipantId) -> bool {
        self.managers.contains(&p)
    }

    pub fn limit_mode(&self) -> LimitMode {
        self.limit_mode
    }

    pub fn open_wallet(
        &mut self,
        ids: &mut IdSource,
        owner: ParticipantId,
        managing_pip: ParticipantId,
        holding_limit: Option<Money>,
        technical: bool,
        linked_bank_account: Option<AccountId>,
    ) -> Result<WalletId, LedgerError> {
        if !self.managers.contains(&managing_pip) {
            return Err(LedgerError::UnknownParticipant(managing_pip));
        }
        if technical && holding_limit.is_some() {
            return Err(LedgerError::TechnicalWithLimit);
        }
        let id: WalletId = ids.next();
        self.wallets.insert(
            id,
            Wallet {
                id,
                owner,
                managing_pip,
                ledger_balance: Money::ZERO,
                holding_limit,
                technical,
                linked_bank_account,
            },
        );
        Ok(id)
    }

    /// Initial issuance into `wallet` at world build, before any PIP is
    /// asked to confirm anything. Bypasses the holding limit check.
    pub fn genesis(&mut self, wallet: WalletId, amount: Money, funding: AccountId) -> Result<(), LedgerError> {
        let w = self.wallets.get_mut(&wallet).ok_or(LedgerError::UnknownWallet(wallet))?;
        w.ledger_balance = w.ledger_balance.checked_add(amount)?;
        self.minted = self.minted.checked_add(amount)?;
        self.record(0, EntryKind::Mint, wallet, amount, format!("genesis:{funding}"));
        Ok(())
    }

    pub fn wallet(&self, id: WalletId) -> Result<&Wallet, LedgerError> {
        self.wallets.get(&id).ok_or(LedgerError::UnknownWallet(id))
    }

    pub fn wallets(&self) -> impl Iterator<Item = &Wallet> {
        self.wallets.values()
    }

    pub fn locks(&self) -> impl Iterator<Item = &LedgerLock> {
        self.locks.values()
    }

    pub fn lock(&self, id: LockId) -> Result<&LedgerLock, LedgerError> {
        self.locks.get(&id).ok_or(LedgerError::UnknownLock(id))
    }

    pub fn pending(&self) -> impl Iterator<Item = &PendingCredit> {
        self.pending.values()
    }

    pub fn pending_credit(&self, id: PendingCreditId) -> Result<&PendingCredit, LedgerError> {
        self.pending.get(&id).ok_or(LedgerError::UnknownPending(id))
    }

    pub fn journal(&self) -> &[JournalEntry] {
        &self.journal
    }

    pub fn payment_calls(&self) -> &[PaymentCall] {
        &self.payment_calls
    }

    pub fn minted(&self) -> Money {
        self.minted
    }

    pub fn burned(&self) -> Money {
        self.burned
    }

    pub fn active_lock_sum(&self, wallet: WalletId) -> Money {
        self.locks
            .values()
            .filter(|l| l.wallet == wallet && l.state == LockState::Active)
            .fold(Money::ZERO, |acc, l| Money::new(acc.pence() + l.amount.pence()))
    }

    pub fn available(&self, wallet: WalletId) -> Result<Money, LedgerError> {
        let w = self.wallet(wallet)?;
        Ok(w.ledger_balance.saturating_sub(self.active_lock_sum(wallet)))
    }

    /// Funds held in suspense by transfers awaiting confirmation.
    pub fn suspense(&self) -> Money {
        Money::new(
            self.pending
                .values()
                .filter(|p| p.state == PendingState::AwaitingPipConfirmation)
                .filter(|p| matches!(p.source, FundingSource::Wallet(_)))
                .map(|p| p.amount.pence())
                .sum(),
        )
    }

    /// Rail funds received for mints that await confirmation.
    pub fn pending_mints(&self) -> Money {
        Money::new(
            self.pending
                .values()
                .filter(|p| p.state == PendingState::AwaitingPipConfirmation)
                .filter(|p| matches!(p.source, FundingSource::Rail(_)))
                .map(|p| p.amount.pence())
                .sum(),
        )
    }

    fn record(&mut self, tick: Tick, kind: EntryKind, wallet: WalletId, amount: Money, counterparty: String) {
        self.journal.push(JournalEntry { tick, kind, wallet, amount, counterparty });
    }

    fn needs_confirmation(&self, w: &Wallet) -> bool {
        !w.technical && !self.managers.contains(&w.owner)
    }

    /// Decide how much of `incoming` the wallet may keep.
    pub fn enforce_holding_limit(
        &self,
        wallet: WalletId,
        incoming: Money,
        mode: LimitMode,
    ) -> Result<LimitOutcome, LedgerError> {
        let w = self.wallet(wallet)?;
        let limit = match (w.technical, w.holding_limit) {
            (false, Some(limit)) => limit,
            _ => return Ok(LimitOutcome::FullCredit),
        };
        let after = w.ledger_balance.checked_add(incoming)?;
        let excess = after.saturating_sub(limit);
        if excess.is_zero() {
            return Ok(LimitOutcome::FullCredit);
        }
        match mode {
            LimitMode::Reject => Ok(LimitOutcome::Rejected),
            LimitMode::Waterfall => {
                if w.linked_bank_account.is_none() {
                    return Err(LedgerError::NoLinkedAccount(wallet));
                }
                Ok(LimitOutcome::PartialWithWaterfall { credit: incoming.checked_sub(excess)?, excess })
            }
        }
    }

    /// Put `amount` into `wallet`, burning any waterfall excess straight on.
    /// Returns `None` when the holding limit refuses the credit outright.
    #[allow(clippy::too_many_arguments)]
    fn apply_credit(
        &mut self,
        tick: Tick,
        wallet: WalletId,
        amount: Money,
        pending: Option<PendingCreditId>,
        kind: EntryKind,
        counterparty: String,
        debit_from: Option<WalletId>,
    ) -> Result<Option<Completion>, LedgerError> {
        let outcome = match self.enforce_holding_limit(wallet, amount, self.limit_mode) {
            Ok(o) => o,
            // No linked account to overflow into: refuse like Reject mode.
            Err(LedgerError::NoLinkedAccount(_)) => LimitOutcome::Rejected,
            Err(e) => return Err(e),
        };
        if outcome == LimitOutcome::Rejected {
            return Ok(None);
        }
        let w = self.wallets.get_mut(&wallet).ok_or(LedgerError::UnknownWallet(wallet))?;
        w.ledger_balance = w.ledger_balance.checked_add(amount)?;
        let owner = w.owner;
        let linked = w.linked_bank_account;
        match (kind, debit_from) {
            (EntryKind::Transfer, Some(from)) => self.record(tick, EntryKind::Transfer, from, amount, wallet.to_string()),
            _ => {
                self.minted = self.minted.checked_add(amount)?;
                self.record(tick, EntryKind::Mint, wallet, amount, counterparty);
            }
        }
        let waterfall = match outcome {
            LimitOutcome::PartialWithWaterfall { excess, .. } => {
                let account = linked.ok_or(LedgerError::NoLinkedAccount(wallet))?;
                let w = self.wallets.get_mut(&wallet).expect("wallet checked above");
                w.ledger_balance = w.ledger_balance.checked_sub(excess)?;
                self.burned = self.burned.checked_add(excess)?;
                self.record(tick, EntryKind::Burn, wallet, excess, account.to_string());
                Some((account, excess))
            }
            _ => None,
        };
        Ok(Some(Completion { pending, wallet, owner, amount, waterfall }))
    }

    fn open_pending(
        &mut self,
        ids: &mut IdSource,
        tick: Tick,
        wallet: WalletId,
        amount: Money,
        source: FundingSource,
        envelope_ref: MessageId,
    ) -> PendingCreditId {
        let id: PendingCreditId = ids.next();
        self.pending.insert(
            id,
            PendingCredit {
                id,
                target_wallet: wallet,
                amount,
                source,
                envelope_ref,
                state: PendingState::AwaitingPipConfirmation,
                opened_at: tick,
            },
        );
        id
    }

    /// Issue `amount` into `wallet` against rail funds already received on
    /// `funding`. User wallets wait for their PIP's approval.
    pub fn mint_to(
        &mut self,
        ids: &mut IdSource,
        tick: Tick,
        wallet: WalletId,
        amount: Money,
        funding: AccountId,
        envelope_ref: MessageId,
    ) -> Result<CreditOutcome, LedgerError> {
        if amount.is_zero() {
            return Err(LedgerError::ZeroAmount);
        }
        let w = self.wallet(wallet)?;
        if self.needs_confirmation(w) {
            let id = self.open_pending(ids, tick, wallet, amount, FundingSource::Rail(funding), envelope_ref);
            return Ok(CreditOutcome::Pending(id));
        }
        match self.apply_credit(tick, wallet, amount, None, EntryKind::Mint, funding.to_string(), None)? {
            Some(c) => Ok(CreditOutcome::Completed(c)),
            None => Ok(CreditOutcome::Rejected(Rejection {
                pending: PendingCreditId(0),
                wallet,
                amount,
                source: FundingSource::Rail(funding),
                envelope_ref,
                reason: "holding limit".into(),
            })),
        }
    }

    fn check_payment(
        &mut self,
        tick: Tick,
        wallet: WalletId,
        by: ParticipantId,
        amount: Money,
        min_available: Money,
    ) -> Result<(), LedgerError> {
        if amount.is_zero() {
            return Err(LedgerError::ZeroAmount);
        }
        let w = self.wallet(wallet)?;
        if w.managing_pip != by {
            return Err(LedgerError::Unauthorised { wallet, by });
        }
        let ledger = w.ledger_balance;
        let locks = self.active_lock_sum(wallet);
        let ok = ledger.pence() as i128 - amount.pence() as i128 - locks.pence() as i128 >= min_available.pence() as i128;
        self.payment_calls.push(PaymentCall {
            tick,
            wallet,
            by,
            amount,
            min_available,
            ledger_before: ledger,
            locks_before: locks,
            accepted: ok,
        });
        if ok {
            Ok(())
        } else {
            Err(LedgerError::InsufficientAvailable { wallet, ledger, amount, locks, minimum: min_available })
        }
    }

    /// Move `amount` from `from` to `to`. The debit is accepted only when
    /// `ledger - amount - locks >= min_available`.
    #[allow(clippy::too_many_arguments)]
    pub fn transfer(
        &mut self,
        ids: &mut IdSource,
        tick: Tick,
        from: WalletId,
        to: WalletId,
        amount: Money,
        min_available: Money,
        by: ParticipantId,
        envelope_ref: MessageId,
    ) -> Result<CreditOutcome, LedgerError> {
        self.wallet(to)?;
        self.check_payment(tick, from, by, amount, min_available)?;
        let src = self.wallets.get_mut(&from).expect("checked");
        src.ledger_balance = src.ledger_balance.checked_sub(amount)?;
        if self.needs_confirmation(self.wallet(to)?) {
            let id = self.open_pending(ids, tick, to, amount, FundingSource::Wallet(from), envelope_ref);
            return Ok(CreditOutcome::Pending(id));
        }
        match self.apply_credit(tick, to, amount, None, EntryKind::Transfer, String::new(), Some(from))? {
            Some(c) => Ok(CreditOutcome::Completed(c)),
            None => {
                let src = self.wallets.get_mut(&from).expect("checked");
                src.ledger_balance = src.ledger_balance.checked_add(amount)?;
                Ok(CreditOutcome::Rejected(Rejection {
                    pending: PendingCreditId(0),
                    wallet: to,
                    amount,
                    source: FundingSource::Wallet(from),
                    envelope_ref,
                    reason: "holding limit".into(),
                }))
            }
        }
    }

    fn reject_pending(&mut self, id: PendingCreditId, reason: String) -> Result<Rejection, LedgerError> {
        let p = self.pending.get_mut(&id).ok_or(LedgerError::UnknownPending(id))?;
        p.state = PendingState::Rejected;
        let r = Rejection {
            pending: id,
            wallet: p.target_wallet,
            amount: p.amount,
            source: p.source,
            envelope_ref: p.envelope_ref,
            reason,
        };
        if let FundingSource::Wallet(from) = r.source {
            let src = self.wallets.get_mut(&from).ok_or(LedgerError::UnknownWallet(from))?;
            src.ledger_balance = src.ledger_balance.checked_add(r.amount)?;
        }
        Ok(r)
    }

    /// The payee PIP's verdict on a pending credit.
    pub fn confirm_credit(
        &mut self,
        tick: Tick,
        pending: PendingCreditId,
        by_pip: ParticipantId,
        decision: Decision,
    ) -> Result<CreditOutcome, LedgerError> {
        let p = self.pending.get(&pending).ok_or(LedgerError::UnknownPending(pending))?.clone();
        let w = self.wallet(p.target_wallet)?;
        if w.managing_pip != by_pip {
            return Err(LedgerError::WrongPip { wallet: p.target_wallet, by: by_pip });
        }
        if p.state != PendingState::AwaitingPipConfirmation {
            return Err(LedgerError::AlreadyDecided(pending));
        }
        match decision {
            Decision::Reject(reason) => Ok(CreditOutcome::Rejected(self.reject_pending(pending, reason)?)),
            Decision::Approve => {
                let (kind, cp, from) = match p.source {
                    FundingSource::Rail(a) => (EntryKind::Mint, a.to_string(), None),
                    FundingSource::Wallet(w) => (EntryKind::Transfer, String::new(), Some(w)),
                };
                match self.apply_credit(tick, p.target_wallet, p.amount, Some(pending), kind, cp, from)? {
                    Some(c) => {
                        self.pending.get_mut(&pending).expect("present").state = PendingState::Completed;
                        Ok(CreditOutcome::Completed(c))
                    }
                    None => Ok(CreditOutcome::Rejected(self.reject_pending(pending, "holding limit".into())?)),
                }
            }
        }
    }

    /// Reject every pending credit older than the confirmation timeout.
    pub fn expire_pending(&mut self, now: Tick) -> Vec<Rejection> {
        let due: Vec<PendingCreditId> = self
            .pending
            .values()
            .filter(|p| p.state == PendingState::AwaitingPipConfirmation)
            .filter(|p| now.saturating_sub(p.opened_at) > self.pending_timeout)
            .map(|p| p.id)
            .collect();
        due.into_iter()
            .map(|id| self.reject_pending(id, "confirmation timeout".into()).expect("pending exists"))
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn lock_funds(
        &mut self,
        ids: &mut IdSource,
        tick: Tick,
        wallet: WalletId,
        amount: Money,
        beneficiary: Beneficiary,
        expiry: Tick,
        by: ParticipantId,
    ) -> Result<LockId, LedgerError> {
        if amount.is_zero() {
            return Err(LedgerError::ZeroAmount);
        }
        let w = self.wallet(wallet)?;
        if w.managing_pip != by {
            return Err(LedgerError::Unauthorised { wallet, by });
        }
        let ledger = w.ledger_balance;
        let locks = self.active_lock_sum(wallet);
        if ledger.saturating_sub(locks) < amount {
            return Err(LedgerError::InsufficientAvailable { wallet, ledger, amount, locks, minimum: Money::ZERO });
        }
        let id: LockId = ids.next();
        self.locks.insert(id, LedgerLock { id, wallet, amount, beneficiary, expiry, state: LockState::Active });
        self.record(tick, EntryKind::LockPlaced, wallet, amount, id.to_string());
        Ok(id)
    }

    fn active_lock(&self, lock: LockId, by_pip: ParticipantId) -> Result<LedgerLock, LedgerError> {
        let l = self.lock(lock)?.clone();
        if l.state != LockState::Active {
            return Err(LedgerError::LockNotActive(lock));
        }
        let w = self.wallet(l.wallet)?;
        if w.managing_pip != by_pip {
            return Err(LedgerError::WrongPip { wallet: l.wallet, by: by_pip });
        }
        Ok(l)
    }

    /// Release a lock and debit the wallet by the locked amount in one step.
    /// The ledger balance drops; the available balance does not change.
    pub fn release_and_pay(
        &mut self,
        tick: Tick,
        lock: LockId,
        by_pip: ParticipantId,
        target: PayTarget,
    ) -> Result<(RailInstruction, Option<Completion>), LedgerError> {
        let l = self.active_lock(lock, by_pip)?;
        if let PayTarget::Wallet(to) = target {
            self.wallet(to)?;
        }
        self.locks.get_mut(&lock).expect("present").state = LockState::Released;
        self.record(tick, EntryKind::LockReleased, l.wallet, l.amount, lock.to_string());
        let w = self.wallets.get_mut(&l.wallet).expect("lock wallet exists");
        w.ledger_balance = w.ledger_balance.checked_sub(l.amount)?;
        let instruction = RailInstruction { wallet: l.wallet, amount: l.amount, target: l.beneficiary };
        match target {
            PayTarget::Burn => {
                self.burned = self.burned.checked_add(l.amount)?;
                self.record(tick, EntryKind::Burn, l.wallet, l.amount, l.beneficiary.to_string());
                Ok((instruction, None))
            }
            PayTarget::Wallet(to) => {
                // Intermediary wallets take the credit without confirmation.
                let w = self.wallets.get_mut(&to).expect("checked");
                w.ledger_balance = w.ledger_balance.checked_add(l.amount)?;
                let owner = w.owner;
                self.record(tick, EntryKind::Transfer, l.wallet, l.amount, to.to_string());
                let c = Completion { pending: None, wallet: to, owner, amount: l.amount, waterfall: None };
                Ok((instruction, Some(c)))
            }
        }
    }

    pub fn cancel_lock(&mut self, tick: Tick, lock: LockId, by_pip: ParticipantId) -> Result<(), LedgerError> {
        let l = self.active_lock(lock, by_pip)?;
        self.locks.get_mut(&lock).expect("present").state = LockState::Cancelled;
        self.record(tick, EntryKind::LockCancelled, l.wallet, l.amount, lock.to_string());
        Ok(())
    }

    /// Expire every active lock whose expiry tick is strictly before `now`.
    pub fn expire_locks(&mut self, now: Tick) -> Vec<LockId> {
        let due: Vec<LockId> = self
            .locks
            .values()
            .filter(|l| l.state == LockState::Active && l.expiry < now)
            .map(|l| l.id)
            .collect();
        for id in &due {
            let l = self.locks.get_mut(id).expect("present");
            l.state = LockState::Expired;
            let (wallet, amount) = (l.wallet, l.amount);
            self.record(now, EntryKind::LockExpired, wallet, amount, id.to_string());
        }
        due
    }

    /// Debit `wallet` for a payment leaving the core ledger.
    pub fn burn_from(
        &mut self,
        tick: Tick,
        wallet: WalletId,
        amount: Money,
        min_available: Money,
        by: ParticipantId,
        target: AccountId,
    ) -> Result<RailInstruction, LedgerError> {
        self.check_payment(tick, wallet, by, amount, min_available)?;
        let w = self.wallets.get_mut(&wallet).expect("checked");
        w.ledger_balance = w.ledger_balance.checked_sub(amount)?;
        self.burned = self.burned.checked_add(amount)?;
        self.record(tick, EntryKind::Burn, wallet, amount, target.to_string());
        Ok(RailInstruction { wallet, amount, target: Beneficiary::Account(target) })
    }

    /// Check issuance conservation and lock accounting. Returns a description
    /// of the first violation found.
    pub fn check_invariants(&self) -> Result<(), String> {
        let balances: u128 = self.wallets.values().map(|w| w.ledger_balance.pence() as u128).sum();
        let lhs = balances + self.suspense().pence() as u128;
        let rhs = self.minted.pence() as i128 - self.burned.pence() as i128;
        if lhs as i128 != rhs {
            return Err(format!("issuance: balances+suspense {lhs} != minted-burned {rhs}"));
        }
        for w in self.wallets.values() {
            let locks = self.active_lock_sum(w.id);
            if locks > w.ledger_balance {
                return Err(format!("wallet {}: locks {} exceed ledger {}", w.id, locks, w.ledger_balance));
            }
            if let (false, Some(limit)) = (w.technical, w.holding_limit) {
                if w.ledger_balance > limit {
                    return Err(format!("wallet {}: balance {} above limit {}", w.id, w.ledger_balance, limit));
                }
            }
        }
        Ok(())
    }

    /// Journal export, one entry per line.
    pub fn export_journal(&self) -> String {
        let mut out = String::new();
        for e in &self.journal {
            out.push_str(&e.line());
            out.push('\n');
        }
        out
    }
}
