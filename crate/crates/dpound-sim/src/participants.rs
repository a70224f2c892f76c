//! Participant state: local stores each actor keeps, the alias directory,
//! dynamic client registration and PIP-side and FMI-side lock records.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::domain::{Alias, ParticipantRole, Tick};
use crate::ids::{AccountId, LockId, ParticipantId, WalletId};
use crate::ledger::Beneficiary;
use crate::money::Money;
use crate::privacy::FieldValue;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParticipantError {
    #[error("alias {0} is not registered")]
    UnknownAlias(String),
    #[error("alias {0} is already registered")]
    DuplicateAlias(String),
    #[error("{registrant} holds no valid registration with {target}")]
    NotRegistered { registrant: ParticipantId, target: ParticipantId },
    #[error("{0} has no partner PIP")]
    NoPartnerPip(ParticipantId),
    #[error("lock {0} is not active")]
    LockNotActive(LockId),
    #[error("unknown lock {0}")]
    UnknownLock(LockId),
}

/// Services a participant can be onboarded to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Service {
    Tsp,
    Network,
    Fmi,
    Eps,
}

impl Service {
    pub fn parse(s: &str) -> Option<Service> {
        match s {
            "tsp" => Some(Service::Tsp),
            "network" => Some(Service::Network),
            "fmi" => Some(Service::Fmi),
            "eps" => Some(Service::Eps),
            _ => None,
        }
    }
}

/// Named business relationships between participants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Partner {
    /// PIP a non-PIP bank uses for confirmation of payee via the CBDC system.
    Cop,
    /// An acquirer's partner PIP. Sends its requests through the CBDC system
    /// and converts payouts to bank money.
    Acquirer,
    /// A PIP's partner commercial bank for inbound bank money.
    Settlement,
}

impl Partner {
    pub fn parse(s: &str) -> Option<Partner> {
        match s {
            "cop_partner" => Some(Partner::Cop),
            "acquirer_partner" => Some(Partner::Acquirer),
            "settlement_partner" => Some(Partner::Settlement),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParticipantState {
    pub id: ParticipantId,
    pub name: String,
    pub role: ParticipantRole,
    /// Display name; personal data when the participant is a person.
    pub legal_name: Option<String>,
    /// A commercial bank that also has core-ledger access as a PIP.
    pub pip_capable: bool,
    pub operator: Option<ParticipantId>,
    pub compliance_pass: bool,
    pub partners: BTreeMap<Partner, ParticipantId>,
    pub onboarded: BTreeSet<Service>,
    pub wallet: Option<WalletId>,
    pub account: Option<AccountId>,
    /// Own-books account a bank uses to park customer funds it converts.
    pub internal_account: Option<AccountId>,
    pub settlement: Option<AccountId>,
    pub sort_code: Option<String>,
    /// Local store for the use case in flight: references, amounts and any
    /// personal data this participant has legitimately received.
    pub memory: BTreeMap<String, FieldValue>,
}

impl ParticipantState {
    pub fn new(id: ParticipantId, name: &str, role: ParticipantRole) -> Self {
        ParticipantState {
            id,
            name: name.to_string(),
            role,
            legal_name: None,
            pip_capable: role.manages_wallets(),
            operator: None,
            compliance_pass: true,
            partners: BTreeMap::new(),
            onboarded: BTreeSet::new(),
            wallet: None,
            account: None,
            internal_account: None,
            settlement: None,
            sort_code: None,
            memory: BTreeMap::new(),
        }
    }

    pub fn partner(&self, p: Partner) -> Option<ParticipantId> {
        self.partners.get(&p).copied()
    }

    pub fn is_onboarded(&self, s: Service) -> bool {
        self.onboarded.contains(&s)
    }

    pub fn remember(&mut self, key: &str, value: FieldValue) {
        self.memory.insert(key.to_string(), value);
    }

    pub fn recall(&self, key: &str) -> Option<&FieldValue> {
        self.memory.get(key)
    }
}

/// Name and target account returned by a confirmation-of-payee check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CopPayload {
    pub owner_name: String,
    /// Wallet the payment will credit.
    pub target: WalletId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliasDirectoryEntry {
    pub alias: Alias,
    pub owner: ParticipantId,
    pub wallet: WalletId,
    pub pip: ParticipantId,
    pub pip_endpoints: Vec<String>,
    /// Present only when the alias service also answers payee checks.
    pub cop_payload: Option<CopPayload>,
}

#[derive(Debug, Clone, Default)]
pub struct AliasDirectory {
    entries: BTreeMap<Alias, AliasDirectoryEntry>,
}

impl AliasDirectory {
    pub fn new() -> Self {
        AliasDirectory::default()
    }

    pub fn register(&mut self, entry: AliasDirectoryEntry) -> Result<(), ParticipantError> {
        if self.entries.contains_key(&entry.alias) {
            return Err(ParticipantError::DuplicateAlias(entry.alias.to_string()));
        }
        self.entries.insert(entry.alias.clone(), entry);
        Ok(())
    }

    pub fn lookup(&self, alias: &Alias) -> Result<&AliasDirectoryEntry, ParticipantError> {
        self.entries.get(alias).ok_or_else(|| ParticipantError::UnknownAlias(alias.to_string()))
    }

    pub fn entries(&self) -> impl Iterator<Item = &AliasDirectoryEntry> {
        self.entries.values()
    }

    /// Attach payee-check payloads to every entry.
    pub fn enable_cop(&mut self, payload: impl Fn(&AliasDirectoryEntry) -> Option<CopPayload>) {
        for e in self.entries.values_mut() {
            e.cop_payload = payload(e);
        }
    }

    pub fn disable_cop(&mut self) {
        for e in self.entries.values_mut() {
            e.cop_payload = None;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DcrRegistration {
    pub registrant: ParticipantId,
    pub target: ParticipantId,
    /// Software statement token issued by the TSP.
    pub credential: String,
    pub granted_endpoints: Vec<String>,
    pub expiry: Tick,
}

impl DcrRegistration {
    pub fn valid_at(&self, now: Tick) -> bool {
        now <= self.expiry
    }
}

/// Registrations granted by the TSP's dynamic client registration service.
#[derive(Debug, Clone, Default)]
pub struct DcrRegistry {
    registrations: BTreeMap<(ParticipantId, ParticipantId), DcrRegistration>,
}

impl DcrRegistry {
    pub fn new() -> Self {
        DcrRegistry::default()
    }

    pub fn insert(&mut self, r: DcrRegistration) {
        self.registrations.insert((r.registrant, r.target), r);
    }

    pub fn grant(&mut self, registrant: ParticipantId, target: ParticipantId, now: Tick, ttl: Tick) -> DcrRegistration {
        let r = DcrRegistration {
            registrant,
            target,
            credential: format!("SSA:{registrant}:{target}:{now}"),
            granted_endpoints: vec![format!("{target}/api")],
            expiry: now + ttl,
        };
        self.insert(r.clone());
        r
    }

    pub fn check(&self, registrant: ParticipantId, target: ParticipantId, now: Tick) -> Result<(), ParticipantError> {
        match self.registrations.get(&(registrant, target)) {
            Some(r) if r.valid_at(now) => Ok(()),
            _ => Err(ParticipantError::NotRegistered { registrant, target }),
        }
    }

    pub fn has_record(&self, registrant: ParticipantId, target: ParticipantId) -> bool {
        self.registrations.contains_key(&(registrant, target))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipLockState {
    Active,
    Released,
    Expired,
    Cancelled,
}

/// A lock recorded by the consumer's PIP rather than on the ledger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipLock {
    pub id: LockId,
    pub wallet: WalletId,
    pub amount: Money,
    pub beneficiary: Beneficiary,
    pub expiry: Tick,
    pub state: PipLockState,
}

#[derive(Debug, Clone, Default)]
pub struct PipLockBook {
    locks: BTreeMap<LockId, PipLock>,
}

impl PipLockBook {
    pub fn new() -> Self {
        PipLockBook::default()
    }

    pub fn place(&mut self, lock: PipLock) {
        self.locks.insert(lock.id, lock);
    }

    pub fn get(&self, id: LockId) -> Option<&PipLock> {
        self.locks.get(&id)
    }

    pub fn locks(&self) -> impl Iterator<Item = &PipLock> {
        self.locks.values()
    }

    /// The value this PIP must pass as the minimum available balance on
    /// every core-ledger payment from `wallet`.
    pub fn active_sum(&self, wallet: WalletId) -> Money {
        Money::new(
            self.locks
                .values()
                .filter(|l| l.wallet == wallet && l.state == PipLockState::Active)
                .map(|l| l.amount.pence())
                .sum(),
        )
    }

    fn finish(&mut self, id: LockId, to: PipLockState) -> Result<PipLock, ParticipantError> {
        let l = self.locks.get_mut(&id).ok_or(ParticipantError::UnknownLock(id))?;
        if l.state != PipLockState::Active {
            return Err(ParticipantError::LockNotActive(id));
        }
        l.state = to;
        Ok(l.clone())
    }

    pub fn release(&mut self, id: LockId) -> Result<PipLock, ParticipantError> {
        self.finish(id, PipLockState::Released)
    }

    pub fn cancel(&mut self, id: LockId) -> Result<PipLock, ParticipantError> {
        self.finish(id, PipLockState::Cancelled)
    }

    /// Expire active locks whose expiry is strictly before `now`.
    pub fn expire(&mut self, now: Tick) -> Vec<LockId> {
        let due: Vec<LockId> =
            self.locks.values().filter(|l| l.state == PipLockState::Active && l.expiry < now).map(|l| l.id).collect();
        for id in &due {
            self.locks.get_mut(id).expect("present").state = PipLockState::Expired;
        }
        due
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EscrowState {
    Active,
    Released,
    Refunded,
}

/// Funds held in the FMI's technical wallet pending release.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EscrowRecord {
    pub id: LockId,
    pub source_wallet: WalletId,
    pub amount: Money,
    pub beneficiary: Beneficiary,
    pub expiry: Tick,
    pub state: EscrowState,
}

#[derive(Debug, Clone, Default)]
pub struct EscrowBook {
    records: BTreeMap<LockId, EscrowRecord>,
}

impl EscrowBook {
    pub fn new() -> Self {
        EscrowBook::default()
    }

    pub fn open(&mut self, r: EscrowRecord) {
        self.records.insert(r.id, r);
    }

    pub fn get(&self, id: LockId) -> Option<&EscrowRecord> {
        self.records.get(&id)
    }

    pub fn records(&self) -> impl Iterator<Item = &EscrowRecord> {
        self.records.values()
    }

    pub fn held(&self) -> Money {
        Money::new(
            self.records.values().filter(|r| r.state == EscrowState::Active).map(|r| r.amount.pence()).sum(),
        )
    }

    pub fn settle(&mut self, id: LockId, to: EscrowState) -> Result<EscrowRecord, ParticipantError> {
        let r = self.records.get_mut(&id).ok_or(ParticipantError::UnknownLock(id))?;
        if r.state != EscrowState::Active {
            return Err(ParticipantError::LockNotActive(id));
        }
        r.state = to;
        Ok(r.clone())
    }

    /// Active escrows whose expiry is strictly before `now`.
    pub fn due(&self, now: Tick) -> Vec<LockId> {
        self.records.values().filter(|r| r.state == EscrowState::Active && r.expiry < now).map(|r| r.id).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pip_lock(id: u32, amount: u64) -> PipLock {
        PipLock {
            id: LockId(id),
            wallet: WalletId(1),
            amount: Money::new(amount),
            beneficiary: Beneficiary::Account(AccountId(9)),
            expiry: 10,
            state: PipLockState::Active,
        }
    }

    #[test]
    fn pip_lock_sum_tracks_state() {
        let mut book = PipLockBook::new();
        book.place(pip_lock(1, 3000));
        book.place(pip_lock(2, 500));
        assert_eq!(book.active_sum(WalletId(1)), Money::new(3500));
        book.release(LockId(1)).unwrap();
        assert_eq!(book.active_sum(WalletId(1)), Money::new(500));
        assert_eq!(book.release(LockId(1)), Err(ParticipantError::LockNotActive(LockId(1))));
        assert_eq!(book.expire(10), vec![]);
        assert_eq!(book.expire(11), vec![LockId(2)]);
        assert_eq!(book.active_sum(WalletId(1)), Money::ZERO);
    }

    #[test]
    fn registrations_expire() {
        let mut reg = DcrRegistry::new();
        let (a, b) = (ParticipantId(1), ParticipantId(2));
        assert!(reg.check(a, b, 0).is_err());
        reg.grant(a, b, 5, 10);
        assert!(reg.check(a, b, 15).is_ok());
        assert!(reg.check(a, b, 16).is_err());
    }
}
