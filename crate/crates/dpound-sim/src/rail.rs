//! Commercial bank money: RTGS settlement accounts, bank customer accounts
//! and an FPS-like instant payment scheme with DCSP/DCNSP participation.
//!
//! An FPS payment posts a customer leg (payer account to payee account) and
//! an interbank leg (payer bank's settlement account to payee bank's). When
//! either end is a settlement account held directly (an FMI technical
//! account, the digital pound backing account) that end has no customer leg.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::domain::Tick;
use crate::ids::{AccountId, IdSource, MessageId, ParticipantId};
use crate::money::{Money, MoneyError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RailError {
    #[error("account {account} holds {balance}, needs {needed}")]
    InsufficientFunds { account: AccountId, balance: Money, needed: Money },
    #[error("no FPS participant reachable at {0}")]
    UnknownDestination(String),
    #[error("instruction {0} already submitted")]
    DuplicateInstruction(MessageId),
    #[error("sponsor {0} is not a settling participant")]
    SponsorNotDcsp(ParticipantId),
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("participant {0} has no settlement account")]
    NoSettlementAccount(ParticipantId),
    #[error("RTGS is closed")]
    RtgsClosed,
    #[error(transparent)]
    Money(#[from] MoneyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SettlementKind {
    /// A commercial bank's reserves.
    Bank,
    /// Held directly by a non-bank participant such as an FMI.
    Direct,
    /// The central bank's dedicated digital pound settlement account.
    Backing,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SettlementAccount {
    pub id: AccountId,
    pub holder: ParticipantId,
    pub balance: Money,
    pub fps_reachable: bool,
    pub sort_code: String,
    pub number: String,
    pub kind: SettlementKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BankCustomerAccount {
    pub id: AccountId,
    pub bank: ParticipantId,
    pub owner: ParticipantId,
    pub balance: Money,
    pub sort_code: String,
    pub number: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpsParticipation {
    Dcsp,
    Dcnsp { sponsor: ParticipantId },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FpsInstruction {
    pub id: MessageId,
    pub from_account: AccountId,
    pub to_sort_code: String,
    pub to_account: String,
    pub amount: Money,
    /// Message carrying the remittance data (e.g. the payee's wallet id).
    pub remittance: Option<MessageId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FpsCleared {
    pub instruction: MessageId,
    pub to: AccountId,
    /// Participant told about the incoming funds: the receiving bank, the
    /// DCNSP for sponsored credits, or the direct holder.
    pub notify: ParticipantId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RailTag {
    Rtgs,
    Fps,
    Bank,
}

impl RailTag {
    pub fn name(self) -> &'static str {
        match self {
            RailTag::Rtgs => "RTGS",
            RailTag::Fps => "FPS",
            RailTag::Bank => "BANK",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RailEntry {
    pub tag: RailTag,
    pub tick: Tick,
    pub kind: &'static str,
    pub account: AccountId,
    pub amount: Money,
    pub counterparty: String,
}

impl RailEntry {
    /// `TAG|tick|entry_kind|account|amount|counterparty`
    pub fn line(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}|{}",
            self.tag.name(),
            self.tick,
            self.kind,
            self.account,
            self.amount,
            self.counterparty
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endpoint {
    Settlement(AccountId),
    Customer { account: AccountId, bank_settlement: AccountId },
}

#[derive(Debug, Clone, Default)]
pub struct Rail {
    settlement: BTreeMap<AccountId, SettlementAccount>,
    customer: BTreeMap<AccountId, BankCustomerAccount>,
    by_holder: BTreeMap<ParticipantId, AccountId>,
    fps: BTreeMap<ParticipantId, FpsParticipation>,
    sort_codes: BTreeMap<String, ParticipantId>,
    seen: BTreeSet<MessageId>,
    journal: Vec<RailEntry>,
    backing: Option<AccountId>,
    rtgs_open: bool,
}

impl Rail {
    pub fn new() -> Self {
        Rail { rtgs_open: true, ..Rail::default() }
    }

    pub fn set_rtgs_open(&mut self, open: bool) {
        self.rtgs_open = open;
    }

    pub fn rtgs_open(&self) -> bool {
        self.rtgs_open
    }

    pub fn open_settlement_account(
        &mut self,
        ids: &mut IdSource,
        holder: ParticipantId,
        sort_code: &str,
        number: &str,
        balance: Money,
        kind: SettlementKind,
    ) -> AccountId {
        let id: AccountId = ids.next();
        self.settlement.insert(
            id,
            SettlementAccount {
                id,
                holder,
                balance,
                fps_reachable: true,
                sort_code: sort_code.to_string(),
                number: number.to_string(),
                kind,
            },
        );
        self.by_holder.insert(holder, id);
        if kind == SettlementKind::Backing {
            self.backing = Some(id);
        }
        id
    }

    pub fn open_customer_account(
        &mut self,
        ids: &mut IdSource,
        bank: ParticipantId,
        owner: ParticipantId,
        sort_code: &str,
        number: &str,
        balance: Money,
    ) -> AccountId {
        let id: AccountId = ids.next();
        self.customer.insert(
            id,
            BankCustomerAccount {
                id,
                bank,
                owner,
                balance,
                sort_code: sort_code.to_string(),
                number: number.to_string(),
            },
        );
        id
    }

    pub fn register_fps_participant(
        &mut self,
        p: ParticipantId,
        sort_code: &str,
        kind: FpsParticipation,
    ) -> Result<(), RailError> {
        if let FpsParticipation::Dcnsp { sponsor } = kind {
            if self.fps.get(&sponsor) != Some(&FpsParticipation::Dcsp) {
                return Err(RailError::SponsorNotDcsp(sponsor));
            }
        }
        self.fps.insert(p, kind);
        self.sort_codes.insert(sort_code.to_string(), p);
        Ok(())
    }

    pub fn fps_participation(&self, p: ParticipantId) -> Option<FpsParticipation> {
        self.fps.get(&p).copied()
    }

    pub fn backing(&self) -> Option<AccountId> {
        self.backing
    }

    pub fn settlement_account_of(&self, p: ParticipantId) -> Option<AccountId> {
        self.by_holder.get(&p).copied()
    }

    pub fn settlement_accounts(&self) -> impl Iterator<Item = &SettlementAccount> {
        self.settlement.values()
    }

    pub fn customer_accounts(&self) -> impl Iterator<Item = &BankCustomerAccount> {
        self.customer.values()
    }

    pub fn customer_account(&self, id: AccountId) -> Option<&BankCustomerAccount> {
        self.customer.get(&id)
    }

    pub fn settlement_account(&self, id: AccountId) -> Option<&SettlementAccount> {
        self.settlement.get(&id)
    }

    pub fn balance(&self, id: AccountId) -> Result<Money, RailError> {
        self.settlement
            .get(&id)
            .map(|a| a.balance)
            .or_else(|| self.customer.get(&id).map(|a| a.balance))
            .ok_or(RailError::UnknownAccount(id))
    }

    /// Sort code and account number used to address `id` over FPS.
    pub fn address(&self, id: AccountId) -> Result<(String, String), RailError> {
        if let Some(a) = self.settlement.get(&id) {
            return Ok((a.sort_code.clone(), a.number.clone()));
        }
        if let Some(a) = self.customer.get(&id) {
            return Ok((a.sort_code.clone(), a.number.clone()));
        }
        Err(RailError::UnknownAccount(id))
    }

    pub fn journal(&self) -> &[RailEntry] {
        &self.journal
    }

    pub fn total_settlement(&self) -> u128 {
        self.settlement.values().map(|a| a.balance.pence() as u128).sum()
    }

    pub(crate) fn record_entry(
        &mut self,
        tag: RailTag,
        tick: Tick,
        kind: &'static str,
        account: AccountId,
        amount: Money,
        cp: String,
    ) {
        self.push(tag, tick, kind, account, amount, cp);
    }

    pub(crate) fn apply_net(&mut self, id: AccountId, delta: i128) -> Result<(), RailError> {
        self.adjust(id, delta)
    }

    fn push(&mut self, tag: RailTag, tick: Tick, kind: &'static str, account: AccountId, amount: Money, cp: String) {
        self.journal.push(RailEntry { tag, tick, kind, account, amount, counterparty: cp });
    }

    fn adjust(&mut self, id: AccountId, delta: i128) -> Result<(), RailError> {
        let bal = if let Some(a) = self.settlement.get_mut(&id) {
            &mut a.balance
        } else if let Some(a) = self.customer.get_mut(&id) {
            &mut a.balance
        } else {
            return Err(RailError::UnknownAccount(id));
        };
        let next = bal.pence() as i128 + delta;
        if next < 0 {
            return Err(RailError::InsufficientFunds {
                account: id,
                balance: *bal,
                needed: Money::new((-delta) as u64),
            });
        }
        if next > u64::MAX as i128 {
            return Err(RailError::Money(MoneyError::Overflow));
        }
        *bal = Money::new(next as u64);
        Ok(())
    }

    fn require(&self, id: AccountId, amount: Money) -> Result<(), RailError> {
        let balance = self.balance(id)?;
        if balance < amount {
            return Err(RailError::InsufficientFunds { account: id, balance, needed: amount });
        }
        Ok(())
    }

    fn endpoint(&self, id: AccountId) -> Result<Endpoint, RailError> {
        if self.settlement.contains_key(&id) {
            return Ok(Endpoint::Settlement(id));
        }
        let c = self.customer.get(&id).ok_or(RailError::UnknownAccount(id))?;
        let bank_settlement = self.by_holder.get(&c.bank).copied().ok_or(RailError::NoSettlementAccount(c.bank))?;
        Ok(Endpoint::Customer { account: id, bank_settlement })
    }

    fn resolve_destination(&self, sort_code: &str, number: &str) -> Result<(AccountId, ParticipantId), RailError> {
        let unknown = || RailError::UnknownDestination(format!("{sort_code}-{number}"));
        let participant = *self.sort_codes.get(sort_code).ok_or_else(unknown)?;
        let account = self
            .settlement
            .values()
            .find(|a| a.sort_code == sort_code && a.number == number && a.fps_reachable)
            .map(|a| a.id)
            .or_else(|| {
                self.customer.values().find(|a| a.sort_code == sort_code && a.number == number).map(|a| a.id)
            })
            .ok_or_else(unknown)?;
        Ok((account, participant))
    }

    /// Clear an instant payment. Either every posting happens or none does.
    pub fn fps_pay(&mut self, tick: Tick, instr: &FpsInstruction) -> Result<FpsCleared, RailError> {
        if self.seen.contains(&instr.id) {
            return Err(RailError::DuplicateInstruction(instr.id));
        }
        let src = self.endpoint(instr.from_account)?;
        let (to, reached) = self.resolve_destination(&instr.to_sort_code, &instr.to_account)?;
        let dst = self.endpoint(to)?;
        let amount = instr.amount;

        // Validate before posting anything.
        match src {
            Endpoint::Settlement(a) => self.require(a, amount)?,
            Endpoint::Customer { account, bank_settlement } => {
                self.require(account, amount)?;
                let same_bank = matches!(dst, Endpoint::Customer { bank_settlement: b, .. } if b == bank_settlement);
                if !same_bank {
                    self.require(bank_settlement, amount)?;
                }
            }
        }
        self.seen.insert(instr.id);
        let cp = instr.id.to_string();
        let (src_settle, src_customer) = match src {
            Endpoint::Settlement(a) => (a, None),
            Endpoint::Customer { account, bank_settlement } => (bank_settlement, Some(account)),
        };
        let (dst_settle, dst_customer) = match dst {
            Endpoint::Settlement(a) => (a, None),
            Endpoint::Customer { account, bank_settlement } => (bank_settlement, Some(account)),
        };
        self.push(RailTag::Fps, tick, "Cleared", instr.from_account, amount, to.to_string());
        if let Some(a) = src_customer {
            self.adjust(a, -amount)?;
            self.push(RailTag::Bank, tick, "Debit", a, amount, cp.clone());
        }
        if src_settle != dst_settle {
            self.adjust(src_settle, -amount)?;
            self.push(RailTag::Rtgs, tick, "Debit", src_settle, amount, dst_settle.to_string());
            self.adjust(dst_settle, amount.signed())?;
            self.push(RailTag::Rtgs, tick, "Credit", dst_settle, amount, src_settle.to_string());
        }
        if let Some(a) = dst_customer {
            self.adjust(a, amount.signed())?;
            self.push(RailTag::Bank, tick, "Credit", a, amount, cp);
        }
        // A DCNSP's credits settle on its sponsor's account; the DCNSP itself
        // is the one notified.
        let notify = match self.settlement.get(&to) {
            Some(a) => a.holder,
            None => {
                let c = &self.customer[&to];
                match self.fps.get(&reached) {
                    Some(FpsParticipation::Dcnsp { .. }) => reached,
                    _ => c.bank,
                }
            }
        };
        Ok(FpsCleared { instruction: instr.id, to, notify })
    }

    /// Immediate gross transfer between settlement accounts.
    pub fn rtgs_transfer(&mut self, tick: Tick, from: AccountId, to: AccountId, amount: Money) -> Result<(), RailError> {
        if amount.is_zero() {
            return Ok(());
        }
        if !self.rtgs_open {
            return Err(RailError::RtgsClosed);
        }
        for id in [from, to] {
            if !self.settlement.contains_key(&id) {
                return Err(RailError::UnknownAccount(id));
            }
        }
        self.require(from, amount)?;
        self.adjust(from, -amount)?;
        self.push(RailTag::Rtgs, tick, "Debit", from, amount, to.to_string());
        self.adjust(to, amount.signed())?;
        self.push(RailTag::Rtgs, tick, "Credit", to, amount, from.to_string());
        Ok(())
    }

    /// Move funds between two accounts at the same bank.
    pub fn book_transfer(&mut self, tick: Tick, from: AccountId, to: AccountId, amount: Money) -> Result<(), RailError> {
        self.require(from, amount)?;
        if !self.customer.contains_key(&to) {
            return Err(RailError::UnknownAccount(to));
        }
        self.adjust(from, -amount)?;
        self.push(RailTag::Bank, tick, "Debit", from, amount, to.to_string());
        self.adjust(to, amount.signed())?;
        self.push(RailTag::Bank, tick, "Credit", to, amount, from.to_string());
        Ok(())
    }

    /// Debit a customer account on the bank's own books, e.g. when the bank
    /// submits the payment to a scheme that settles later.
    pub fn bank_debit(&mut self, tick: Tick, account: AccountId, amount: Money, reference: &str) -> Result<(), RailError> {
        if !self.customer.contains_key(&account) {
            return Err(RailError::UnknownAccount(account));
        }
        self.require(account, amount)?;
        self.adjust(account, -amount)?;
        self.push(RailTag::Bank, tick, "Debit", account, amount, reference.to_string());
        Ok(())
    }

    pub fn bank_credit(&mut self, tick: Tick, account: AccountId, amount: Money, reference: &str) -> Result<(), RailError> {
        if !self.customer.contains_key(&account) {
            return Err(RailError::UnknownAccount(account));
        }
        self.adjust(account, amount.signed())?;
        self.push(RailTag::Bank, tick, "Credit", account, amount, reference.to_string());
        Ok(())
    }

    pub fn export_journal(&self) -> String {
        let mut out = String::new();
        for e in &self.journal {
            out.push_str(&e.line());
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for FpsParticipation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FpsParticipation::Dcsp => f.write_str("DCSP"),
            FpsParticipation::Dcnsp { sponsor } => write!(f, "DCNSP({sponsor})"),
        }
    }
}
