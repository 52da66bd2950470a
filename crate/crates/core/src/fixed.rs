//! Exact fixed-point decimals with eight fractional digits.
//!
//! Trade sizes and prices are carried as an integer count of 10^-8 units so
//! that roundness and digit logic never touch floating point.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Number of fractional decimal digits in the fixed-point grid.
pub const SCALE: u32 = 8;
/// Sub-units per whole unit.
pub const UNIT: u64 = 100_000_000;

/// Powers of ten representable in `u64`.
pub(crate) const POW10: [u64; 20] = [
    1,
    10,
    100,
    1_000,
    10_000,
    100_000,
    1_000_000,
    10_000_000,
    100_000_000,
    1_000_000_000,
    10_000_000_000,
    100_000_000_000,
    1_000_000_000_000,
    10_000_000_000_000,
    100_000_000_000_000,
    1_000_000_000_000_000,
    10_000_000_000_000_000,
    100_000_000_000_000_000,
    1_000_000_000_000_000_000,
    10_000_000_000_000_000_000,
];

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum DecimalError {
    #[error("empty value")]
    Empty,
    #[error("invalid character")]
    InvalidChar,
    #[error("precision overflow")]
    PrecisionOverflow,
    #[error("value out of range")]
    Overflow,
}

/// Non-negative decimal stored as an integer count of 10^-8 units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Fixed8(u64);

/// Trade size in native currency units.
pub type Amount = Fixed8;
/// Quote-currency price per native unit.
pub type Price = Fixed8;

impl Fixed8 {
    pub const ZERO: Fixed8 = Fixed8(0);

    pub const fn from_sub_units(sub_units: u64) -> Self {
        Fixed8(sub_units)
    }

    /// Whole units, e.g. `from_units(3)` is `3.0`.
    pub fn from_units(units: u64) -> Option<Self> {
        units.checked_mul(UNIT).map(Fixed8)
    }

    pub const fn sub_units(self) -> u64 {
        self.0
    }

    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / UNIT as f64
    }

    /// Multiply by 10^k exactly, `None` on overflow or when digits would be lost.
    pub fn scale_pow10(self, k: i32) -> Option<Self> {
        if k >= 0 {
            let factor = *POW10.get(k as usize)?;
            self.0.checked_mul(factor).map(Fixed8)
        } else {
            let factor = *POW10.get((-k) as usize)?;
            (self.0 % factor == 0).then(|| Fixed8(self.0 / factor))
        }
    }

    /// Number of trailing decimal zeros of the sub-unit integer (0 for zero).
    pub(crate) fn trailing_decimal_zeros(self) -> u32 {
        if self.0 == 0 {
            return 0;
        }
        let mut n = self.0;
        let mut zeros = 0;
        while n % 10 == 0 {
            n /= 10;
            zeros += 1;
        }
        zeros
    }
}

impl FromStr for Fixed8 {
    type Err = DecimalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(DecimalError::Empty);
        }
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, Some(f)),
            None => (s, None),
        };
        if int_part.is_empty() || !int_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(DecimalError::InvalidChar);
        }
        let mut value: u64 = 0;
        for b in int_part.bytes() {
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add(u64::from(b - b'0')))
                .ok_or(DecimalError::Overflow)?;
        }
        value = value.checked_mul(UNIT).ok_or(DecimalError::Overflow)?;

        if let Some(frac) = frac_part {
            if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(DecimalError::InvalidChar);
            }
            if frac.len() > SCALE as usize {
                return Err(DecimalError::PrecisionOverflow);
            }
            let mut frac_value: u64 = 0;
            for b in frac.bytes() {
                frac_value = frac_value * 10 + u64::from(b - b'0');
            }
            frac_value *= POW10[SCALE as usize - frac.len()];
            value = value
                .checked_add(frac_value)
                .ok_or(DecimalError::Overflow)?;
        }
        Ok(Fixed8(value))
    }
}

impl fmt::Display for Fixed8 {
    /// Canonical form: no trailing fractional zeros, no trailing dot.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let int = self.0 / UNIT;
        let frac = self.0 % UNIT;
        if frac == 0 {
            return write!(f, "{int}");
        }
        let digits = format!("{frac:08}");
        write!(f, "{int}.{}", digits.trim_end_matches('0'))
    }
}

impl Serialize for Fixed8 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Fixed8 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
