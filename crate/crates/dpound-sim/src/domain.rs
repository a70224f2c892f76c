//! Shared vocabulary: roles, personal data, aliases and the simulated clock.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::ids::ParticipantId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParticipantRole {
    CentralBankCbdcSystem,
    CentralBankRtgs,
    Pip,
    PipLite,
    CommercialBank,
    Acquirer,
    Tsp,
    Fmi,
    AliasService,
    EnhancedPaymentSystem,
    User,
    DeliveryAgent,
    FpsScheme,
}

impl ParticipantRole {
    pub const ALL: [ParticipantRole; 13] = [
        ParticipantRole::CentralBankCbdcSystem,
        ParticipantRole::CentralBankRtgs,
        ParticipantRole::Pip,
        ParticipantRole::PipLite,
        ParticipantRole::CommercialBank,
        ParticipantRole::Acquirer,
        ParticipantRole::Tsp,
        ParticipantRole::Fmi,
        ParticipantRole::AliasService,
        ParticipantRole::EnhancedPaymentSystem,
        ParticipantRole::User,
        ParticipantRole::DeliveryAgent,
        ParticipantRole::FpsScheme,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParticipantRole::CentralBankCbdcSystem => "CentralBankCbdcSystem",
            ParticipantRole::CentralBankRtgs => "CentralBankRtgs",
            ParticipantRole::Pip => "Pip",
            ParticipantRole::PipLite => "PipLite",
            ParticipantRole::CommercialBank => "CommercialBank",
            ParticipantRole::Acquirer => "Acquirer",
            ParticipantRole::Tsp => "Tsp",
            ParticipantRole::Fmi => "Fmi",
            ParticipantRole::AliasService => "AliasService",
            ParticipantRole::EnhancedPaymentSystem => "EnhancedPaymentSystem",
            ParticipantRole::User => "User",
            ParticipantRole::DeliveryAgent => "DeliveryAgent",
            ParticipantRole::FpsScheme => "FpsScheme",
        }
    }

    pub fn is_central_bank(self) -> bool {
        matches!(self, ParticipantRole::CentralBankCbdcSystem | ParticipantRole::CentralBankRtgs)
    }

    /// Roles that may manage wallets on the core ledger without further
    /// configuration. Commercial banks qualify only when flagged as PIPs.
    pub fn manages_wallets(self) -> bool {
        matches!(self, ParticipantRole::Pip | ParticipantRole::PipLite | ParticipantRole::Fmi)
    }
}

impl fmt::Display for ParticipantRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {what} `{value}`")]
pub struct ParseEnumError {
    pub what: &'static str,
    pub value: String,
}

impl FromStr for ParticipantRole {
    type Err = ParseEnumError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ParticipantRole::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| ParseEnumError { what: "role", value: s.to_string() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DatumKind {
    Name,
    PhoneAlias,
    AccountDetails,
    TransactionPurpose,
}

impl DatumKind {
    pub const ALL: [DatumKind; 4] =
        [DatumKind::Name, DatumKind::PhoneAlias, DatumKind::AccountDetails, DatumKind::TransactionPurpose];

    pub fn name(self) -> &'static str {
        match self {
            DatumKind::Name => "Name",
            DatumKind::PhoneAlias => "PhoneAlias",
            DatumKind::AccountDetails => "AccountDetails",
            DatumKind::TransactionPurpose => "TransactionPurpose",
        }
    }
}

impl fmt::Display for DatumKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatumKind {
    type Err = ParseEnumError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DatumKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ParseEnumError { what: "datum kind", value: s.to_string() })
    }
}

/// A piece of personal data about `subject`. Carried structurally through
/// messages so exposure can be computed without string matching.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PersonalDatum {
    pub subject: ParticipantId,
    pub kind: DatumKind,
    pub value: String,
}

impl PersonalDatum {
    pub fn new(subject: ParticipantId, kind: DatumKind, value: impl Into<String>) -> Self {
        PersonalDatum { subject, kind, value: value.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AliasKind {
    MobileNumber,
    SortCodeAccountNumber,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AliasError {
    #[error("mobile alias must be 11 digits starting 07, got `{0}`")]
    BadMobile(String),
    #[error("sort code alias must be 6 digits + 8 digits, got `{0}`")]
    BadSortCode(String),
    #[error("alias must be `mobile:<digits>` or `scan:<sort>:<account>`, got `{0}`")]
    BadForm(String),
}

/// Wallet alias. Mobile numbers are `07` followed by nine digits; sort code
/// aliases are six digits then eight digits, stored as `ssssss-aaaaaaaa`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Alias {
    kind: AliasKind,
    value: String,
}

fn all_digits(s: &str, n: usize) -> bool {
    s.len() == n && s.bytes().all(|b| b.is_ascii_digit())
}

impl Alias {
    pub fn mobile(value: &str) -> Result<Self, AliasError> {
        if all_digits(value, 11) && value.starts_with("07") {
            Ok(Alias { kind: AliasKind::MobileNumber, value: value.to_string() })
        } else {
            Err(AliasError::BadMobile(value.to_string()))
        }
    }

    pub fn sort_code(sort: &str, account: &str) -> Result<Self, AliasError> {
        if all_digits(sort, 6) && all_digits(account, 8) {
            Ok(Alias { kind: AliasKind::SortCodeAccountNumber, value: format!("{sort}-{account}") })
        } else {
            Err(AliasError::BadSortCode(format!("{sort}:{account}")))
        }
    }

    pub fn kind(&self) -> AliasKind {
        self.kind
    }

    pub fn value(&self) -> &str {
        &self.value
    }
}

impl fmt::Display for Alias {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            AliasKind::MobileNumber => write!(f, "mobile:{}", self.value),
            AliasKind::SortCodeAccountNumber => write!(f, "scan:{}", self.value.replace('-', ":")),
        }
    }
}

impl FromStr for Alias {
    type Err = AliasError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split(':');
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some("mobile"), Some(v), None, None) => Alias::mobile(v),
            (Some("scan"), Some(sort), Some(acct), None) => Alias::sort_code(sort, acct),
            _ => Err(AliasError::BadForm(s.to_string())),
        }
    }
}

pub type Tick = u64;

/// Tick counter. Only the scenario engine advances it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimClock {
    now: Tick,
}

impl SimClock {
    pub fn new() -> Self {
        SimClock { now: 0 }
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    /// Move to tick `t`. Ticks with nothing to do may be skipped, but time
    /// never goes back.
    pub(crate) fn advance_to(&mut self, t: Tick) -> Tick {
        assert!(t >= self.now, "clock moved back from {} to {t}", self.now);
        self.now = t;
        self.now
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alias_shapes() {
        assert!(Alias::mobile("07700900123").is_ok());
        assert!(Alias::mobile("0770090012").is_err());
        assert!(Alias::mobile("08700900123").is_err());
        assert!(Alias::sort_code("040004", "12345678").is_ok());
        assert!(Alias::sort_code("04004", "12345678").is_err());
        let a: Alias = "scan:040004:12345678".parse().unwrap();
        assert_eq!(a.to_string(), "scan:040004:12345678");
        assert_eq!(a.kind(), AliasKind::SortCodeAccountNumber);
        assert!("phone:0".parse::<Alias>().is_err());
    }

    #[test]
    fn roles_round_trip() {
        for r in ParticipantRole::ALL {
            assert_eq!(r.name().parse::<ParticipantRole>().unwrap(), r);
        }
        assert!("Bank".parse::<ParticipantRole>().is_err());
    }

    #[test]
    fn clock_only_moves_forward() {
        let mut c = SimClock::new();
        assert_eq!(c.now(), 0);
        assert_eq!(c.advance_to(1), 1);
        assert_eq!(c.advance_to(5), 5);
        assert_eq!(c.now(), 5);
    }

    #[test]
    #[should_panic(expected = "clock moved back")]
    fn clock_rejects_going_back() {
        let mut c = SimClock::new();
        c.advance_to(3);
        c.advance_to(2);
    }

    #[test]
    fn datum_equality_includes_subject() {
        let a = PersonalDatum::new(ParticipantId(1), DatumKind::Name, "C. Child");
        let b = PersonalDatum::new(ParticipantId(2), DatumKind::Name, "C. Child");
        assert_ne!(a, b);
    }
}
