use std::fmt;

use crate::error::{Error, Result};

pub const XI_MIN: f64 = 0.5;
pub const XI_MAX: f64 = 0.75;

/// The majority set and its bias for one step. `s` holds full-string
/// indices `k ≥ 1`, strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub s: Vec<usize>,
    pub xi: f64,
}

impl Selection {
    pub(crate) fn check(&self, horizon: usize) -> Result<()> {
        if self.s.len().is_multiple_of(2) && !self.s.is_empty() {
            return Err(Error::ContractViolation(format!("majority set has even size {}", self.s.len())));
        }
        if !(XI_MIN..=XI_MAX).contains(&self.xi) {
            return Err(Error::ContractViolation(format!("ξ = {} outside [{XI_MIN}, {XI_MAX}]", self.xi)));
        }
        if self.s.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::ContractViolation("majority set must be strictly increasing".into()));
        }
        if let Some(&k) = self.s.iter().find(|&&k| k == 0 || k > horizon) {
            return Err(Error::ContractViolation(format!("index {k} outside 1..={horizon}")));
        }
        Ok(())
    }
}

/// Chooses the majority set and bias from the `y`-past alone.
pub trait BlockRule: Send + Sync + fmt::Debug {
    /// Largest past index the rule reads or selects.
    fn horizon(&self) -> usize;

    /// `y_past[j]` is the bit at full-string index `j + 1`.
    fn select(&self, y_past: &[u8]) -> Selection;
}

/// Scale `j` is picked by the run of leading ones in the `y`-past: the largest
/// `j` with `thresholds[j] ≤ run`. It selects `S = {1, …, m_j}` with `ξ`
/// interpolated linearly by scale.
#[derive(Debug, Clone, PartialEq)]
pub struct DefaultBlockRule {
    scales: Vec<usize>,
    thresholds: Vec<usize>,
    xi_min: f64,
    xi_max: f64,
}

impl DefaultBlockRule {
    pub fn new(scales: Vec<usize>, thresholds: Vec<usize>, xi_min: f64, xi_max: f64) -> Result<Self> {
        if scales.is_empty() {
            return Err(Error::InvalidParameter("at least one scale is required".into()));
        }
        if let Some(m) = scales.iter().find(|&&m| m % 2 == 0) {
            return Err(Error::InvalidParameter(format!("scale {m} is even")));
        }
        if scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("scales must be strictly increasing".into()));
        }
        if thresholds.len() != scales.len() {
            return Err(Error::InvalidParameter(format!(
                "{} thresholds for {} scales",
                thresholds.len(),
                scales.len()
            )));
        }
        if thresholds.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter("thresholds must be non-decreasing".into()));
        }
        if !(XI_MIN <= xi_min && xi_min <= xi_max && xi_max <= XI_MAX) {
            return Err(Error::InvalidParameter(format!(
                "need {XI_MIN} ≤ ξ_min ≤ ξ_max ≤ {XI_MAX}, got [{xi_min}, {xi_max}]"
            )));
        }
        Ok(Self { scales, thresholds, xi_min, xi_max })
    }

    pub fn scales(&self) -> &[usize] {
        &self.scales
    }

    pub fn thresholds(&self) -> &[usize] {
        &self.thresholds
    }

    pub fn xi_range(&self) -> (f64, f64) {
        (self.xi_min, self.xi_max)
    }

    pub fn xi(&self, scale: usize) -> f64 {
        let j = self.scales.len() as f64;
        self.xi_min + (self.xi_max - self.xi_min) * (scale as f64 + 1.0) / j
    }

    fn run_cap(&self) -> usize {
        *self.thresholds.last().expect("non-empty")
    }
}

impl BlockRule for DefaultBlockRule {
    fn horizon(&self) -> usize {
        self.run_cap().max(*self.scales.last().expect("non-empty"))
    }

    fn select(&self, y_past: &[u8]) -> Selection {
        let run = y_past.iter().take(self.run_cap()).take_while(|&&b| b == 1).count();
        match self.thresholds.iter().rposition(|&t| t <= run) {
            Some(j) => Selection { s: (1..=self.scales[j]).collect(), xi: self.xi(j) },
            None => Selection { s: Vec::new(), xi: XI_MIN },
        }
    }
}

/// Thresholds `0, 2, 4, …` and `ξ` running up to `3/4`.
pub fn default_block_rule(scales: &[usize]) -> Result<DefaultBlockRule> {
    let thresholds = (0..scales.len()).map(|j| 2 * j).collect();
    DefaultBlockRule::new(scales.to_vec(), thresholds, XI_MIN, XI_MAX)
}
