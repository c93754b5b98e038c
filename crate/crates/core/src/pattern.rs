//! FCFS queue content patterns.
//!
//! A pattern records which packet ages are present in the queue at the end
//! of a slot. Bit `i - 1` of the mask is set when a packet of age `i` is
//! stored, so the head-of-line age `h` is the index of the highest set bit
//! plus one and the queue length `l` is the popcount. The empty queue has
//! `h = 0` and `l = 0`.
//!
//! Textual form lists presence from the head down to age 1, e.g. `"101"` is
//! a head of age 3 plus a packet of age 1. The empty queue is `"0"`.

use std::fmt;
use std::str::FromStr;

use crate::error::AnalyticError;

/// Largest representable head-of-line age.
pub const MAX_HEAD_AGE: u32 = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QueuePattern {
    mask: u64,
}

impl QueuePattern {
    pub const EMPTY: QueuePattern = QueuePattern { mask: 0 };

    pub const fn from_mask(mask: u64) -> Self {
        Self { mask }
    }

    /// Head of age `h` plus the lower presence bits for ages `1..h`.
    pub fn with_head(h: u32, lower: u64) -> Result<Self, AnalyticError> {
        if h == 0 || h > MAX_HEAD_AGE {
            return Err(AnalyticError::Pattern(format!(
                "head age {h} outside 1..=64"
            )));
        }
        let head = 1u64 << (h - 1);
        if lower >= head {
            return Err(AnalyticError::Pattern(format!(
                "lower bits {lower:#b} reach the head position {h}"
            )));
        }
        Ok(Self { mask: head | lower })
    }

    /// Builds a pattern from the ages of the stored packets.
    pub fn from_ages(ages: &[u64]) -> Result<Self, AnalyticError> {
        let mut mask = 0u64;
        for &a in ages {
            if a == 0 || a > MAX_HEAD_AGE as u64 {
                return Err(AnalyticError::Pattern(format!(
                    "packet age {a} outside 1..=64"
                )));
            }
            let bit = 1u64 << (a - 1);
            if mask & bit != 0 {
                return Err(AnalyticError::Pattern(format!("two packets of age {a}")));
            }
            mask |= bit;
        }
        Ok(Self { mask })
    }

    pub const fn mask(self) -> u64 {
        self.mask
    }

    pub const fn is_empty(self) -> bool {
        self.mask == 0
    }

    /// Head-of-line age, 0 for the empty queue.
    pub const fn h(self) -> u32 {
        64 - self.mask.leading_zeros()
    }

    /// Queue length.
    pub const fn l(self) -> u32 {
        self.mask.count_ones()
    }

    /// Packet ages from the head down.
    pub fn ages(self) -> Vec<u64> {
        (1..=self.h() as u64)
            .rev()
            .filter(|&a| self.mask & (1 << (a - 1)) != 0)
            .collect()
    }

    /// All `2^(h-1)` patterns whose head has age `h`, in mask order.
    pub fn all_with_head(h: u32) -> impl Iterator<Item = QueuePattern> {
        assert!((1..MAX_HEAD_AGE).contains(&h), "head age must be in 1..64");
        let head = 1u64 << (h - 1);
        (0..head).map(move |lower| QueuePattern { mask: head | lower })
    }
}

impl fmt::Display for QueuePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("0");
        }
        for age in (1..=self.h()).rev() {
            f.write_str(if self.mask & (1 << (age - 1)) != 0 {
                "1"
            } else {
                "0"
            })?;
        }
        Ok(())
    }
}

impl FromStr for QueuePattern {
    type Err = AnalyticError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "0" {
            return Ok(Self::EMPTY);
        }
        if s.is_empty() || s.len() > MAX_HEAD_AGE as usize || !s.starts_with('1') {
            return Err(AnalyticError::Pattern(format!(
                "`{s}` must be \"0\" or a 0/1 string of at most 64 digits starting with 1"
            )));
        }
        let mut mask = 0u64;
        for c in s.chars() {
            mask = (mask << 1)
                | match c {
                    '0' => 0,
                    '1' => 1,
                    _ => return Err(AnalyticError::Pattern(format!("`{s}` contains `{c}`"))),
                };
        }
        Ok(Self { mask })
    }
}
