//! The associated chain `Y` on its own, driven by per-level success
//! probabilities, and a tail diagnostic for its excursion lengths.

use rand::Rng;
use serde::Serialize;

use super::bounds::{level_bound, LogCoshSums};
use super::runner::{Excursion, StepEvent, StepRecord};
use super::schedule::BlockSchedule;
use crate::doeblin_fn::VariationProfile;
use crate::error::{Error, Result};

/// Largest number of step records [`simulate_y_chain`] will materialize.
pub const MAX_RECORDED_STEPS: u64 = 50_000_000;

/// Minimum sample size for [`kesten_diagnostic`].
pub const KESTEN_MIN_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct YChainParams {
    schedule: BlockSchedule,
    p: Vec<f64>,
}

impl YChainParams {
    /// `p[ℓ]` is the success probability at level `ℓ`; the last entry
    /// repeats. Every entry must lie in `(0, 1/2]`.
    pub fn new(schedule: BlockSchedule, p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidParameter("at least one success probability is required".into()));
        }
        if let Some((l, v)) = p.iter().enumerate().find(|(_, v)| !(**v > 0.0 && **v <= 0.5)) {
            return Err(Error::InvalidParameter(format!("p_{l} = {v} must lie in (0, 1/2]")));
        }
        Ok(Self { schedule, p })
    }

    pub fn constant(schedule: BlockSchedule, p: f64) -> Result<Self> {
        Self::new(schedule, vec![p])
    }

    /// `p_ℓ = min(1/2, certified bound at level ℓ)` for levels `0..levels`.
    pub fn from_profile(schedule: BlockSchedule, r: &VariationProfile, levels: u32) -> Result<Self> {
        let sums = LogCoshSums::new(r);
        let p = (0..levels.max(1))
            .map(|l| level_bound(&sums, &schedule, l).map(|b| b.min(0.5)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(schedule, p)
    }

    pub fn schedule(&self) -> BlockSchedule {
        self.schedule
    }

    pub fn p(&self, level: u32) -> f64 {
        self.p[(level as usize).min(self.p.len() - 1)]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct YChainRun {
    pub excursions: Vec<Excursion>,
    pub steps: Option<Vec<StepRecord>>,
}

/// Simulates `excursions` excursions of `Y` from zero. Levels are drawn per
/// excursion; with `record_steps` the step-by-step path is expanded too.
pub fn simulate_y_chain<R: Rng + ?Sized>(
    params: &YChainParams,
    excursions: u64,
    record_steps: bool,
    rng: &mut R,
) -> Result<YChainRun> {
    if excursions == 0 {
        return Err(Error::InvalidParameter("excursions must be ≥ 1".into()));
    }
    let schedule = params.schedule();
    let mut out = Vec::with_capacity(excursions.min(1 << 24) as usize);
    let mut steps = record_steps.then(Vec::new);
    let mut t: u64 = 0;
    for k in 1..=excursions {
        let mut level = 0u32;
        while rng.random::<f64>() < params.p(level) {
            level = level
                .checked_add(1)
                .ok_or_else(|| Error::Overflow("level counter".into()))?;
            schedule.checked_breaking_state(level + 1)?;
        }
        let m = schedule.checked_breaking_state(level + 1)?;
        if let Some(steps) = steps.as_mut() {
            if t.saturating_add(m) > MAX_RECORDED_STEPS {
                return Err(Error::BudgetExceeded { required: u128::from(t) + u128::from(m), budget: u128::from(MAX_RECORDED_STEPS) });
            }
            expand(&schedule, t, level, steps)?;
        }
        t = t
            .checked_add(m)
            .ok_or_else(|| Error::Overflow(format!("renewal time after {k} excursions exceeds 64 bits")))?;
        out.push(Excursion { k, t, m, level });
    }
    Ok(YChainRun { excursions: out, steps })
}

fn expand(schedule: &BlockSchedule, start: u64, last: u32, steps: &mut Vec<StepRecord>) -> Result<()> {
    let mut n = start;
    for level in 0..=last {
        let big_b = schedule.checked_breaking_state(level)?;
        let b = schedule.checked_gap(level)?;
        for i in 1..=b {
            n += 1;
            let (y, event) = if level < last {
                ((big_b + i) as i64, if i == 1 { StepEvent::BlockSuccess } else { StepEvent::Climb })
            } else {
                let y = i as i64 - b as i64;
                let event = match (y, i) {
                    (0, _) => StepEvent::Renewal,
                    (_, 1) => StepEvent::BlockFail,
                    _ => StepEvent::Climb,
                };
                (y, event)
            };
            steps.push(StepRecord { n, y, level, event, kappa: 0 });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanVerdict {
    Diverging,
    Finite,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelFrequency {
    pub level: u32,
    pub empirical: f64,
    pub stderr: f64,
    /// `p_0 (1/K)^(ℓ−1) / 2` with the empirical `p_0`; present for `ℓ ≥ 1`.
    pub reference_lower_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KestenReport {
    pub samples: usize,
    pub mean_level: f64,
    /// Estimated tail index `α` of `P(M > t) ≈ t^(−α)`.
    pub tail_index: f64,
    pub tail_index_stderr: f64,
    pub verdict: MeanVerdict,
    pub levels: Vec<LevelFrequency>,
    /// Running means of `M` over the first `2^j` samples.
    pub running_means: Vec<(usize, f64)>,
}

/// Tail index of excursion lengths `M = N·K^L` from the discrete maximum
/// likelihood fit of a geometric level law, `α̂ = ln(1 + 1/L̄) / ln K`. The
/// mean is declared diverging unless `α̂` exceeds 1 by three standard errors.
pub fn kesten_diagnostic(m_samples: &[u64], schedule: &BlockSchedule) -> Result<KestenReport> {
    if m_samples.len() < KESTEN_MIN_SAMPLES {
        return Err(Error::TooFewSamples { needed: KESTEN_MIN_SAMPLES, got: m_samples.len() });
    }
    let (n_base, k) = (schedule.n(), schedule.k());
    let levels = m_samples
        .iter()
        .map(|&m| {
            let mut level = 0u32;
            let mut v = n_base;
            while v < m {
                v = v.checked_mul(k).ok_or_else(|| Error::Overflow("N·K^L".into()))?;
                level += 1;
            }
            if v != m {
                return Err(Error::Domain(format!("M = {m} is not of the form {n_base}·{k}^L")));
            }
            Ok(level)
        })
        .collect::<Result<Vec<u32>>>()?;
    let n = levels.len() as f64;
    let mean = levels.iter().map(|&l| f64::from(l)).sum::<f64>() / n;
    let var = levels.iter().map(|&l| (f64::from(l) - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let ln_k = (k as f64).ln();
    let (alpha, se) = if mean > 0.0 {
        let alpha = (1.0 + 1.0 / mean).ln() / ln_k;
        let se = var.sqrt() / n.sqrt() / (mean * (1.0 + mean) * ln_k);
        (alpha, se)
    } else {
        (f64::INFINITY, 0.0)
    };
    let verdict = if alpha - 3.0 * se <= 1.0 { MeanVerdict::Diverging } else { MeanVerdict::Finite };
    let top = levels.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0u64; top as usize + 1];
    for &l in &levels {
        counts[l as usize] += 1;
    }
    let p0 = 1.0 - counts[0] as f64 / n;
    let freqs = counts
        .iter()
        .enumerate()
        .map(|(l, &c)| {
            let f = c as f64 / n;
            LevelFrequency {
                level: l as u32,
                empirical: f,
                stderr: (f * (1.0 - f) / n).sqrt(),
                reference_lower_bound: (l >= 1).then(|| p0 * (1.0 / k as f64).powi(l as i32 - 1) / 2.0),
            }
        })
        .collect();
    let mut running = Vec::new();
    let mut sum = 0.0;
    for (i, &m) in m_samples.iter().enumerate() {
        sum += m as f64;
        if (i + 1).is_power_of_two() || i + 1 == m_samples.len() {
            running.push((i + 1, sum / (i + 1) as f64));
        }
    }
    Ok(KestenReport {
        samples: m_samples.len(),
        mean_level: mean,
        tail_index: alpha,
        tail_index_stderr: se,
        verdict,
        levels: freqs,
        running_means: running,
    })
}
