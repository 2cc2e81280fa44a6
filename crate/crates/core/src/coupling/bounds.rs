//! Certified lower bounds on block-coupling success and the choice of `K`.
//!
//! For pasts agreeing on at least `B` coordinates, the Hellinger integral of
//! the two `b`-block laws is at least `exp(−Σ_{k=B+1}^{B+b} log cosh(r_k/2))`,
//! and `1 − d_TV ≥ H²/2`. With `b = (K−1)B` the sum runs to `KB`.

use rayon::prelude::*;

use super::prefix::prefix_table;
use super::schedule::BlockSchedule;
use crate::doeblin_fn::{DoeblinFunction, VariationProfile};
use crate::error::{Error, Result};
use crate::sequence::{decode_word, Symbol};

/// Largest `K` tried by [`choose_k`] unless told otherwise.
pub const DEFAULT_K_MAX: u64 = 1 << 12;

fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Prefix sums of `log cosh(r_k / 2)`.
#[derive(Debug, Clone)]
pub struct LogCoshSums {
    prefix: Vec<f64>,
    zero_beyond: bool,
}

impl LogCoshSums {
    pub fn new(r: &VariationProfile) -> Self {
        let mut prefix = Vec::with_capacity(r.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for v in r.values() {
            acc += log_cosh(v / 2.0);
            prefix.push(acc);
        }
        Self { prefix, zero_beyond: r.zero_beyond() }
    }

    fn len(&self) -> usize {
        self.prefix.len() - 1
    }

    /// `Σ_{k=from+1}^{to} log cosh(r_k / 2)`.
    pub fn sum(&self, from: u64, to: u64) -> Result<f64> {
        let len = self.len() as u64;
        if to > len && !self.zero_beyond {
            return Err(Error::ProfileTooShort {
                needed: usize::try_from(to).unwrap_or(usize::MAX),
                available: self.len(),
            });
        }
        let at = |k: u64| self.prefix[k.min(len) as usize];
        Ok(at(to) - at(from.min(to)))
    }

    /// `(1/2) exp(−2 Σ_{k=B+1}^{B+b} log cosh(r_k/2))`.
    pub fn bound(&self, from: u64, b: u64) -> Result<f64> {
        let to = from
            .checked_add(b)
            .ok_or_else(|| Error::Overflow(format!("B + b = {from} + {b}")))?;
        Ok(0.5 * (-2.0 * self.sum(from, to)?).exp())
    }
}

/// Lower bound on `1 − d_TV(ξ_x^b, ξ_x̃^b)` whenever `κ(x, x̃) ≥ from`.
pub fn hellinger_success_bound(r: &VariationProfile, from: u64, b: u64) -> Result<f64> {
    LogCoshSums::new(r).bound(from, b)
}

/// The bound for `b = (K−1)B`.
pub fn success_lower_bound(r: &VariationProfile, big_b: u64, k: u64) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("K = {k} must be ≥ 2")));
    }
    let b = big_b
        .checked_mul(k - 1)
        .ok_or_else(|| Error::Overflow(format!("(K−1)B for K = {k}, B = {big_b}")))?;
    hellinger_success_bound(r, big_b, b)
}

/// The certified success bound for the block attempted at level `ℓ`.
pub fn level_bound(sums: &LogCoshSums, schedule: &BlockSchedule, level: u32) -> Result<f64> {
    sums.bound(schedule.checked_breaking_state(level)?, schedule.checked_gap(level)?)
}

/// Smallest `K ≥ 2` with `success_lower_bound(r, B, K) > 1/K` for every
/// integer `B ≥ N` the profile certifies. Profiles with a zero tail certify
/// every `B`; otherwise `B` ranges while `KB` stays within the profile.
pub fn choose_k(r: &VariationProfile, n: u64, k_max: u64) -> Result<u64> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be ≥ 1".into()));
    }
    let sums = LogCoshSums::new(r);
    let len = r.len() as u64;
    for k in 2..=k_max {
        let top = if r.zero_beyond() {
            // beyond the stored profile every bound equals 1/2
            len.max(n)
        } else {
            let top = len / k;
            if top < n {
                return Err(Error::ProfileTooShort {
                    needed: usize::try_from(k.saturating_mul(n)).unwrap_or(usize::MAX),
                    available: r.len(),
                });
            }
            top
        };
        let threshold = 1.0 / k as f64;
        let mut admissible = true;
        for big_b in n..=top {
            if sums.bound(big_b, big_b * (k - 1))? <= threshold {
                admissible = false;
                break;
            }
        }
        if admissible {
            return Ok(k);
        }
    }
    Err(Error::NoAdmissibleK {
        k_max,
        reason: "the certified bound never exceeds 1/K; the variations decay too slowly".into(),
    })
}

/// Smallest enumerated `1 − d_TV` over pasts agreeing on `B` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    pub min_success: f64,
    pub pairs: u64,
    pub witness: Option<(Vec<Symbol>, Vec<Symbol>)>,
}

/// Enumerates every pair of past windows (of length `horizon`) agreeing on
/// their first `big_b` coordinates and returns the smallest `1 − d_TV` of
/// their `b`-block laws.
pub fn worst_case_success(g: &DoeblinFunction, big_b: usize, b: usize, budget: u128) -> Result<WorstCase> {
    let s = g.alphabet().size();
    let h = g.horizon();
    let windows = g.alphabet().word_count(h).unwrap_or(u128::MAX);
    let blocks = g.alphabet().word_count(b).unwrap_or(u128::MAX);
    let required = windows.saturating_mul(blocks);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let (windows, blocks) = (windows as usize, blocks as usize);
    let mut tables = vec![0.0; windows * blocks];
    tables
        .par_chunks_mut(blocks)
        .enumerate()
        .try_for_each(|(i, table)| {
            let mut past = vec![0; h];
            decode_word(i, s, &mut past);
            prefix_table(g, &past, b, table)
        })?;
    let group = s.pow(h.saturating_sub(big_b) as u32);
    let best = (0..windows)
        .into_par_iter()
        .map(|i| {
            let end = (i / group + 1) * group;
            let p = &tables[i * blocks..(i + 1) * blocks];
            let mut local = (1.0f64, usize::MAX, usize::MAX, 0u64);
            for j in i + 1..end {
                let q = &tables[j * blocks..(j + 1) * blocks];
                let overlap: f64 = p.iter().zip(q).map(|(a, c)| a.min(*c)).sum();
                local.3 += 1;
                if overlap < local.0 {
                    local = (overlap, i, j, local.3);
                }
            }
            local
        })
        .reduce(
            || (1.0, usize::MAX, usize::MAX, 0),
            |a, c| {
                let pairs = a.3 + c.3;
                let winner = if c.0 < a.0 || (c.0 == a.0 && (c.1, c.2) < (a.1, a.2)) { c } else { a };
                (winner.0, winner.1, winner.2, pairs)
            },
        );
    let witness = (best.1 != usize::MAX).then(|| {
        let mut x = vec![0; h];
        let mut y = vec![0; h];
        decode_word(best.1, s, &mut x);
        decode_word(best.2, s, &mut y);
        (x, y)
    });
    Ok(WorstCase { min_success: best.0.min(1.0), pairs: best.3, witness })
}
