//! Deterministic identifier issuance.
//!
//! Every id kind has its own counter starting at 1. The seed does not change
//! the sequence; it is carried so that a run can record which seed issued it.

use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IdKind {
    Participant,
    Wallet,
    Account,
    Message,
    Lock,
    PendingCredit,
    Batch,
}

impl IdKind {
    pub fn prefix(self) -> &'static str {
        match self {
            IdKind::Participant => "P",
            IdKind::Wallet => "W",
            IdKind::Account => "A",
            IdKind::Message => "M",
            IdKind::Lock => "L",
            IdKind::PendingCredit => "PC",
            IdKind::Batch => "B",
        }
    }
}

macro_rules! id_type {
    ($name:ident, $kind:expr) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u32);

        impl $name {
            pub const KIND: IdKind = $kind;
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}-{:04}", Self::KIND.prefix(), self.0)
            }
        }

        impl From<u32> for $name {
            fn from(n: u32) -> Self {
                $name(n)
            }
        }
    };
}

id_type!(ParticipantId, IdKind::Participant);
id_type!(WalletId, IdKind::Wallet);
id_type!(AccountId, IdKind::Account);
id_type!(MessageId, IdKind::Message);
id_type!(LockId, IdKind::Lock);
id_type!(PendingCreditId, IdKind::PendingCredit);
id_type!(BatchId, IdKind::Batch);

/// Per-kind counters. Cloning an `IdSource` forks the sequence.
#[derive(Debug, Clone, Default)]
pub struct IdSource {
    seed: u64,
    counters: BTreeMap<IdKind, u32>,
}

impl IdSource {
    pub fn new(seed: u64) -> Self {
        IdSource { seed, counters: BTreeMap::new() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_raw(&mut self, kind: IdKind) -> u32 {
        let c = self.counters.entry(kind).or_insert(0);
        *c += 1;
        *c
    }

    #[allow(clippy::should_implement_trait)]
    pub fn next<T: From<u32> + HasKind>(&mut self) -> T {
        T::from(self.next_raw(T::ID_KIND))
    }
}

pub trait HasKind {
    const ID_KIND: IdKind;
}

macro_rules! has_kind {
    ($($name:ident),*) => {
        $(impl HasKind for $name {
            const ID_KIND: IdKind = $name::KIND;
        })*
    };
}

has_kind!(ParticipantId, WalletId, AccountId, MessageId, LockId, PendingCreditId, BatchId);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wallet_ids_count_from_one() {
        let mut ids = IdSource::new(7);
        let a: WalletId = ids.next();
        let b: WalletId = ids.next();
        assert_eq!(a.to_string(), "W-0001");
        assert_eq!(b.to_string(), "W-0002");
        let mut again = IdSource::new(7);
        let c: WalletId = again.next();
        assert_eq!(c.to_string(), "W-0001");
    }

    #[test]
    fn kinds_are_independent() {
        let mut ids = IdSource::new(1);
        let _: WalletId = ids.next();
        let m: MessageId = ids.next();
        assert_eq!(m.to_string(), "M-0001");
        let pc: PendingCreditId = ids.next();
        assert_eq!(pc.to_string(), "PC-0001");
    }
}
