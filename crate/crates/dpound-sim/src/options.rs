//! Capability slots, their design options and the published suitability
//! ratings.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UseCase {
    U1,
    U2,
    U3,
}

impl UseCase {
    pub const ALL: [UseCase; 3] = [UseCase::U1, UseCase::U2, UseCase::U3];

    pub fn name(self) -> &'static str {
        match self {
            UseCase::U1 => "U1",
            UseCase::U2 => "U2",
            UseCase::U3 => "U3",
        }
    }

    /// Slots a scenario of this use case needs bound. Locked payments are
    /// settled through the digital-pound-to-bank-money slot of U2.
    pub fn slots(self) -> &'static [Slot] {
        match self {
            UseCase::U1 => &[Slot::U1S1, Slot::U1S2],
            UseCase::U2 => &[Slot::U2S1, Slot::U2S2],
            UseCase::U3 => &[Slot::U3S1, Slot::U3S2, Slot::U3S3, Slot::U2S2],
        }
    }
}

impl fmt::Display for UseCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OptionError {
    #[error("unknown use case `{0}`")]
    UnknownUseCase(String),
    #[error("unknown slot `{0}`")]
    UnknownSlot(String),
    #[error("slot {slot} has no option `{option}`")]
    UnknownOption { slot: Slot, option: String },
}

impl FromStr for UseCase {
    type Err = OptionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        UseCase::ALL.into_iter().find(|u| u.name() == s).ok_or_else(|| OptionError::UnknownUseCase(s.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    /// Confirmation of payee.
    U1S1,
    /// Bank money to digital pounds.
    U1S2,
    /// Request to pay.
    U2S1,
    /// Digital pounds to bank money.
    U2S2,
    /// Request to lock.
    U3S1,
    /// Lock and confirm.
    U3S2,
    /// Release and pay.
    U3S3,
}

impl Slot {
    pub const ALL: [Slot; 7] = [Slot::U1S1, Slot::U1S2, Slot::U2S1, Slot::U2S2, Slot::U3S1, Slot::U3S2, Slot::U3S3];

    pub fn name(self) -> &'static str {
        match self {
            Slot::U1S1 => "U1.S1",
            Slot::U1S2 => "U1.S2",
            Slot::U2S1 => "U2.S1",
            Slot::U2S2 => "U2.S2",
            Slot::U3S1 => "U3.S1",
            Slot::U3S2 => "U3.S2",
            Slot::U3S3 => "U3.S3",
        }
    }

    pub fn option_count(self) -> u8 {
        match self {
            Slot::U1S1 => 4,
            Slot::U1S2 => 6,
            Slot::U2S1 => 3,
            Slot::U2S2 => 5,
            Slot::U3S1 => 3,
            Slot::U3S2 => 5,
            Slot::U3S3 => 3,
        }
    }

    pub fn options(self) -> impl Iterator<Item = OptionId> {
        (1..=self.option_count()).map(move |n| OptionId { slot: self, n })
    }

    pub fn option(self, n: u8) -> Result<OptionId, OptionError> {
        if (1..=self.option_count()).contains(&n) {
            Ok(OptionId { slot: self, n })
        } else {
            Err(OptionError::UnknownOption { slot: self, option: format!("D{n}") })
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Slot {
    type Err = OptionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Slot::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| OptionError::UnknownSlot(s.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OptionId {
    pub slot: Slot,
    pub n: u8,
}

impl fmt::Display for OptionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.D{}", self.slot, self.n)
    }
}

impl FromStr for OptionId {
    type Err = OptionError;
    /// Accepts `U1.S2.D5`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (slot, d) = s.rsplit_once('.').ok_or_else(|| OptionError::UnknownSlot(s.into()))?;
        let slot: Slot = slot.parse()?;
        parse_option(slot, d)
    }
}

/// Parse `D3` as an option of `slot`.
pub fn parse_option(slot: Slot, d: &str) -> Result<OptionId, OptionError> {
    let n = d
        .strip_prefix('D')
        .and_then(|n| n.parse::<u8>().ok())
        .ok_or_else(|| OptionError::UnknownOption { slot, option: d.into() })?;
    slot.option(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Suitability {
    Suitable,
    Partial,
    Unsuitable,
}

impl Suitability {
    pub fn name(self) -> &'static str {
        match self {
            Suitability::Suitable => "suitable",
            Suitability::Partial => "partially suitable",
            Suitability::Unsuitable => "unsuitable",
        }
    }

    pub fn acceptable(self) -> bool {
        self != Suitability::Unsuitable
    }
}

/// Published rating of each option.
pub fn suitability(o: OptionId) -> Suitability {
    use Suitability::*;
    let row: &[Suitability] = match o.slot {
        Slot::U1S1 => &[Partial, Suitable, Unsuitable, Partial],
        Slot::U1S2 => &[Unsuitable, Partial, Partial, Unsuitable, Partial, Partial],
        Slot::U2S1 => &[Partial, Suitable, Suitable],
        Slot::U2S2 => &[Unsuitable, Partial, Partial, Partial, Partial],
        Slot::U3S1 => &[Partial, Suitable, Suitable],
        Slot::U3S2 => &[Partial, Partial, Partial, Partial, Suitable],
        Slot::U3S3 => &[Unsuitable, Partial, Suitable],
    };
    row[(o.n - 1) as usize]
}

/// Who holds a U3 funds lock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LockHolder {
    Ledger,
    Pip,
    Fmi,
}

pub fn lock_holder_of_lock_option(n: u8) -> LockHolder {
    match n {
        1 => LockHolder::Ledger,
        5 => LockHolder::Fmi,
        _ => LockHolder::Pip,
    }
}

pub fn lock_holder_of_release_option(n: u8) -> LockHolder {
    match n {
        1 => LockHolder::Ledger,
        2 => LockHolder::Pip,
        _ => LockHolder::Fmi,
    }
}

/// Chosen option per slot.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bindings(BTreeMap<Slot, u8>);

impl Bindings {
    pub fn new() -> Self {
        Bindings::default()
    }

    pub fn bind(&mut self, o: OptionId) {
        self.0.insert(o.slot, o.n);
    }

    pub fn with(mut self, o: OptionId) -> Self {
        self.bind(o);
        self
    }

    pub fn get(&self, slot: Slot) -> Option<u8> {
        self.0.get(&slot).copied()
    }

    pub fn option(&self, slot: Slot) -> Option<OptionId> {
        self.get(slot).map(|n| OptionId { slot, n })
    }

    pub fn iter(&self) -> impl Iterator<Item = OptionId> + '_ {
        self.0.iter().map(|(&slot, &n)| OptionId { slot, n })
    }

    /// First slot the use case needs that has no binding.
    pub fn missing(&self, uc: UseCase) -> Option<Slot> {
        uc.slots().iter().copied().find(|s| !self.0.contains_key(s))
    }

    /// Whether the U3 lock and release options agree on who holds the lock.
    pub fn lock_holders_agree(&self) -> bool {
        match (self.get(Slot::U3S2), self.get(Slot::U3S3)) {
            (Some(l), Some(r)) => lock_holder_of_lock_option(l) == lock_holder_of_release_option(r),
            _ => true,
        }
    }

    pub fn all_acceptable(&self, uc: UseCase) -> bool {
        uc.slots().iter().all(|&s| self.option(s).map(|o| suitability(o).acceptable()).unwrap_or(false))
    }
}

impl fmt::Display for Bindings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|o| format!("{}=D{}", o.slot, o.n)).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Every binding combination for `uc` whose options are all rated suitable
/// or partially suitable and whose lock options agree.
pub fn acceptable_combinations(uc: UseCase) -> Vec<Bindings> {
    let mut combos = vec![Bindings::new()];
    for &slot in uc.slots() {
        let mut next = Vec::new();
        for b in &combos {
            for o in slot.options().filter(|&o| suitability(o).acceptable()) {
                next.push(b.clone().with(o));
            }
        }
        combos = next;
    }
    combos.retain(Bindings::lock_holders_agree);
    combos
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn option_ids_parse() {
        let o: OptionId = "U1.S2.D5".parse().unwrap();
        assert_eq!(o, OptionId { slot: Slot::U1S2, n: 5 });
        assert_eq!(o.to_string(), "U1.S2.D5");
        assert!("U1.S2.D7".parse::<OptionId>().is_err());
        assert!("U9.S2.D1".parse::<OptionId>().is_err());
    }

    #[test]
    fn combination_counts() {
        assert_eq!(acceptable_combinations(UseCase::U1).len(), 3 * 4);
        assert_eq!(acceptable_combinations(UseCase::U2).len(), 3 * 4);
        // Pip-held locks (three lock options) release via D2, FMI escrow via D3.
        assert_eq!(acceptable_combinations(UseCase::U3).len(), 3 * 4 * 4);
    }
}
