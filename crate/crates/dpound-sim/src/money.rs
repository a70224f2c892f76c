//! Integer pence with checked arithmetic.

use std::fmt;
use std::ops::Neg;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MoneyError {
    #[error("money overflow")]
    Overflow,
    /// The subtrahend was larger than the minuend. Call sites usually map
    /// this to an insufficient-funds error of their own.
    #[error("money underflow")]
    Underflow,
}

/// Non-negative amount in minor units (pence).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Money(u64);

impl Money {
    pub const ZERO: Money = Money(0);
    pub const MAX: Money = Money(u64::MAX);

    pub const fn new(pence: u64) -> Self {
        Money(pence)
    }

    pub const fn pence(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_add(self, other: Money) -> Result<Money, MoneyError> {
        self.0.checked_add(other.0).map(Money).ok_or(MoneyError::Overflow)
    }

    pub fn checked_sub(self, other: Money) -> Result<Money, MoneyError> {
        self.0.checked_sub(other.0).map(Money).ok_or(MoneyError::Underflow)
    }

    /// `max(0, self - other)`.
    pub fn saturating_sub(self, other: Money) -> Money {
        Money(self.0.saturating_sub(other.0))
    }

    /// Sum of an iterator, failing on overflow.
    pub fn sum<I: IntoIterator<Item = Money>>(items: I) -> Result<Money, MoneyError> {
        items.into_iter().try_fold(Money::ZERO, Money::checked_add)
    }

    pub fn signed(self) -> i128 {
        self.0 as i128
    }
}

impl Neg for Money {
    type Output = i128;
    fn neg(self) -> i128 {
        -(self.0 as i128)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn money_add(a: Money, b: Money) -> Result<Money, MoneyError> {
    a.checked_add(b)
}

pub fn money_sub(a: Money, b: Money) -> Result<Money, MoneyError> {
    a.checked_sub(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_examples() {
        assert_eq!(money_add(Money::ZERO, Money::ZERO), Ok(Money::ZERO));
        assert_eq!(money_add(Money::new(100), Money::new(250)), Ok(Money::new(350)));
        assert_eq!(money_add(Money::MAX, Money::new(1)), Err(MoneyError::Overflow));
    }

    #[test]
    fn sub_examples() {
        assert_eq!(money_sub(Money::new(350), Money::new(350)), Ok(Money::ZERO));
        assert_eq!(money_sub(Money::new(100), Money::new(30)), Ok(Money::new(70)));
        assert_eq!(money_sub(Money::new(30), Money::new(100)), Err(MoneyError::Underflow));
    }

    #[test]
    fn sum_overflows() {
        assert_eq!(Money::sum([Money::MAX, Money::new(1)]), Err(MoneyError::Overflow));
        assert_eq!(Money::sum([]), Ok(Money::ZERO));
    }
}
