use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Breaking states `B_0 = 0`, `B_ℓ = N·K^(ℓ−1)` and gaps `b_ℓ = B_{ℓ+1} − B_ℓ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSchedule {
    n: u64,
    k: u64,
}

impl BlockSchedule {
    pub fn new(n: u64, k: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("N must be ≥ 1".into()));
        }
        if k < 2 {
            return Err(Error::InvalidParameter(format!("K = {k} must be ≥ 2")));
        }
        Ok(Self { n, k })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    /// `B_ℓ`, or `None` on overflow.
    pub fn breaking_state(&self, level: u32) -> Option<u64> {
        match level {
            0 => Some(0),
            l => self.k.checked_pow(l - 1)?.checked_mul(self.n),
        }
    }

    /// `b_ℓ`, or `None` on overflow.
    pub fn gap(&self, level: u32) -> Option<u64> {
        match level {
            0 => Some(self.n),
            l => self.breaking_state(l)?.checked_mul(self.k - 1),
        }
    }

    pub fn checked_breaking_state(&self, level: u32) -> Result<u64> {
        self.breaking_state(level)
            .ok_or_else(|| Error::Overflow(format!("B_{level} for N = {}, K = {} exceeds 64 bits", self.n, self.k)))
    }

    pub fn checked_gap(&self, level: u32) -> Result<u64> {
        self.gap(level)
            .ok_or_else(|| Error::Overflow(format!("b_{level} for N = {}, K = {} exceeds 64 bits", self.n, self.k)))
    }
}
