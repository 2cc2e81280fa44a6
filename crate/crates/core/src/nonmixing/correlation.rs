use std::collections::HashSet;
use std::fmt::Write as _;

use serde::Serialize;

use super::spin;
use crate::chain::ChainWalker;
use crate::doeblin_fn::{DoeblinFunction, DEFAULT_BUDGET};
use crate::error::{Error, Result};
use crate::replicas::run_replicas;
use crate::rng::RngKey;
use crate::sequence::{Alphabet, State, Symbol, Word};
use crate::transfer::{push_forward, stationary_local_at_depth, CylinderFunction, CylinderMeasure};

/// A cylinder set.
#[derive(Debug, Clone, PartialEq)]
pub enum CylinderEvent {
    /// The first `depth` symbols form one of `members`.
    Words { depth: usize, members: Vec<Vec<Symbol>> },
    /// The sign of `Σ_{k<len} x_k` is `+1`, or of `Σ_{k<len} (−1)^k x_k` when
    /// `alternating`; `len` is odd.
    Signature { len: usize, alternating: bool },
}

impl CylinderEvent {
    pub fn words(alphabet: &Alphabet, members: &[Word]) -> Result<Self> {
        let depth = members.first().map_or(0, Word::len);
        if members.iter().any(|w| w.len() != depth) {
            return Err(Error::DepthMismatch("cylinder words must share one length".into()));
        }
        for w in members {
            for &s in w.symbols() {
                if !alphabet.contains(s) {
                    return Err(Error::Domain(format!("symbol {s} not in alphabet")));
                }
            }
        }
        Ok(Self::Words { depth, members: members.iter().map(|w| w.symbols().to_vec()).collect() })
    }

    /// `{x_0 has spin +1}` on the pair or spin alphabet.
    pub fn spin_up(alphabet: &Alphabet) -> Result<Self> {
        let members: Vec<Word> =
            (0..alphabet.size()).filter(|&s| spin(s as Symbol) == 1).map(|s| Word::from(vec![s as Symbol])).collect();
        Self::words(alphabet, &members)
    }

    pub fn signature(len: usize, alternating: bool) -> Result<Self> {
        if len.is_multiple_of(2) {
            return Err(Error::ContractViolation(format!("signature length {len} is even")));
        }
        Ok(Self::Signature { len, alternating })
    }

    pub fn depth(&self) -> usize {
        match self {
            CylinderEvent::Words { depth, .. } => *depth,
            CylinderEvent::Signature { len, .. } => *len,
        }
    }

    fn matcher(&self) -> Matcher<'_> {
        match self {
            CylinderEvent::Words { depth, members } => {
                Matcher::Words(*depth, members.iter().map(Vec::as_slice).collect())
            }
            CylinderEvent::Signature { len, alternating } => Matcher::Signature(*len, *alternating),
        }
    }

    /// Whether `prefix` (of length at least `depth`) lies in the set.
    pub fn contains(&self, prefix: &[Symbol]) -> bool {
        self.matcher().contains(prefix)
    }

    pub fn indicator(&self, alphabet: &Alphabet, depth: usize) -> Result<CylinderFunction> {
        if depth < self.depth() {
            return Err(Error::DepthMismatch(format!("event needs depth {}, got {depth}", self.depth())));
        }
        let m = self.matcher();
        CylinderFunction::from_fn(alphabet, depth, |w| if m.contains(w) { 1.0 } else { 0.0 })
    }
}

enum Matcher<'a> {
    Words(usize, HashSet<&'a [Symbol]>),
    Signature(usize, bool),
}

impl Matcher<'_> {
    fn contains(&self, prefix: &[Symbol]) -> bool {
        match self {
            Matcher::Words(depth, set) => set.contains(&prefix[..*depth]),
            Matcher::Signature(len, alternating) => {
                let sum: i64 = prefix[..*len]
                    .iter()
                    .enumerate()
                    .map(|(k, &s)| {
                        let x = i64::from(spin(s));
                        if *alternating && k % 2 == 1 {
                            -x
                        } else {
                            x
                        }
                    })
                    .sum();
                sum > 0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorrelationMethod {
    /// Stationary law and transitions of a local `g`, computed exactly.
    ExactLocal,
    /// Independent trajectories from `x0`, one random stream per replica.
    Simulated { x0: State, key: RngKey },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationOptions {
    pub budget: u128,
    pub stationary_tol: f64,
    pub max_iters: usize,
    /// Number of time origins averaged per trajectory.
    pub length: usize,
    pub burn_in: usize,
    pub replicas: usize,
    /// Batches for the standard error when there is a single replica.
    pub batches: usize,
    pub workers: usize,
}

impl Default for CorrelationOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            stationary_tol: 1e-13,
            max_iters: 100_000,
            length: 4096,
            burn_in: 0,
            replicas: 1,
            batches: 32,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LagEstimate {
    pub lag: usize,
    /// `μ(T⁻ⁿA ∩ B)`.
    pub estimate: f64,
    pub stderr: f64,
    /// `(1/n) Σ_{k≤n} |ĉ_k − μ(A)μ(B)|`.
    pub cesaro_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub method: &'static str,
    pub mu_a: f64,
    pub mu_b: f64,
    pub lags: Vec<LagEstimate>,
    pub replicas: usize,
}

impl CorrelationReport {
    fn from_estimates(method: &'static str, mu_a: f64, mu_b: f64, est: Vec<(f64, f64)>, replicas: usize) -> Self {
        let mut acc = 0.0;
        let lags = est
            .into_iter()
            .enumerate()
            .map(|(i, (estimate, stderr))| {
                acc += (estimate - mu_a * mu_b).abs();
                LagEstimate { lag: i + 1, estimate, stderr, cesaro_term: acc / (i + 1) as f64 }
            })
            .collect();
        Self { method, mu_a, mu_b, lags, replicas }
    }

    fn range(&self, lo: usize, hi: usize) -> Result<&[LagEstimate]> {
        if lo == 0 || lo > hi || hi > self.lags.len() {
            return Err(Error::InvalidParameter(format!("lag range [{lo}, {hi}] outside 1..={}", self.lags.len())));
        }
        Ok(&self.lags[lo - 1..hi])
    }

    /// Mean Cesàro term over lags `lo..=hi`.
    pub fn cesaro_tail(&self, lo: usize, hi: usize) -> Result<f64> {
        let r = self.range(lo, hi)?;
        Ok(r.iter().map(|l| l.cesaro_term).sum::<f64>() / r.len() as f64)
    }

    /// Mean estimate over even and odd lags in `lo..=hi`.
    pub fn parity_means(&self, lo: usize, hi: usize) -> Result<(f64, f64)> {
        let r = self.range(lo, hi)?;
        let mean = |parity: usize| {
            let v: Vec<f64> = r.iter().filter(|l| l.lag % 2 == parity).map(|l| l.estimate).collect();
            v.iter().sum::<f64>() / v.len().max(1) as f64
        };
        Ok((mean(0), mean(1)))
    }

    /// `lag,estimate,stderr,cesaro_term`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lag,estimate,stderr,cesaro_term\n");
        for l in &self.lags {
            let _ = writeln!(out, "{},{},{},{}", l.lag, l.estimate, l.stderr, l.cesaro_term);
        }
        out
    }
}

/// Exact `μ(T⁻ⁿA ∩ B)` for `n = 1..=n_max` under the stationary law of a
/// local `g`: the stationary law restricted to `A` is pushed `n` steps and
/// integrated against `B`.
pub fn correlation_exact(
    g: &DoeblinFunction,
    a: &CylinderEvent,
    b: &CylinderEvent,
    n_max: usize,
    opts: &CorrelationOptions,
) -> Result<CorrelationReport> {
    if g.memory_bound().is_none() {
        return Err(Error::NonLocal(format!("{} has no finite memory", g.label())));
    }
    let depth = g.read_depth().max(a.depth()).max(b.depth()).max(1);
    let cells = g.alphabet().word_count(depth).unwrap_or(u128::MAX);
    if cells > opts.budget {
        return Err(Error::BudgetExceeded { required: cells, budget: opts.budget });
    }
    let pi = stationary_local_at_depth(g, depth, opts.stationary_tol, opts.max_iters)?;
    let (ia, ib) = (a.indicator(g.alphabet(), depth)?, b.indicator(g.alphabet(), depth)?);
    let (mu_a, mu_b) = (pi.integrate(&ia)?, pi.integrate(&ib)?);
    let mut est = Vec::with_capacity(n_max);
    if mu_a > 0.0 {
        let restricted: Vec<f64> = pi.probs().iter().zip(ia.table()).map(|(p, i)| p * i / mu_a).collect();
        let mut nu = CylinderMeasure::new(g.alphabet(), depth, restricted)?;
        for _ in 0..n_max {
            nu = push_forward(g, &nu, 1)?;
            est.push(((mu_a * nu.integrate(&ib)?).clamp(0.0, 1.0), 0.0));
        }
    } else {
        est.resize(n_max, (0.0, 0.0));
    }
    Ok(CorrelationReport::from_estimates("exact-local", mu_a, mu_b, est, 0))
}

fn batch_count(opts: &CorrelationOptions) -> usize {
    if opts.replicas == 1 {
        opts.batches.clamp(2, opts.length.max(2))
    } else {
        1
    }
}

struct Series {
    mu_a: f64,
    mu_b: f64,
    /// `ĉ_n` per batch, `n = 1..=n_max`.
    batches: Vec<Vec<f64>>,
}

fn simulate_series(
    g: &DoeblinFunction,
    a: &CylinderEvent,
    b: &CylinderEvent,
    n_max: usize,
    x0: &State,
    opts: &CorrelationOptions,
    rng: &mut rand_chacha::ChaCha20Rng,
) -> Result<Series> {
    let batches = batch_count(opts);
    let mut walker = ChainWalker::new(g, x0)?;
    for _ in 0..opts.burn_in {
        walker.step(rng)?;
    }
    let depth = a.depth().max(b.depth());
    let (ma, mb) = (a.matcher(), b.matcher());
    let total = opts.length + n_max;
    let mut buf = vec![0 as Symbol; depth];
    let mut ia = Vec::with_capacity(total);
    let mut ib = Vec::with_capacity(total);
    for t in 0..total {
        if t > 0 {
            walker.step(rng)?;
        }
        walker.state().fill_prefix(&mut buf);
        ia.push(ma.contains(&buf));
        ib.push(mb.contains(&buf));
    }
    let mean = |v: &[bool]| v.iter().filter(|&&x| x).count() as f64 / v.len() as f64;
    let per = opts.length / batches;
    let batches = (0..batches)
        .map(|j| {
            let origins = j * per..(j + 1) * per;
            (1..=n_max)
                .map(|n| origins.clone().filter(|&t| ia[t] && ib[t + n]).count() as f64 / per as f64)
                .collect()
        })
        .collect();
    Ok(Series { mu_a: mean(&ia), mu_b: mean(&ib), batches })
}

fn mean_and_stderr(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, f64::NAN);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo `μ(T⁻ⁿA ∩ B)`: along a trajectory `x^(t)` the estimator is
/// the average over time origins `t` of `1_A(x^(t)) 1_B(x^(t+n))`. Standard
/// errors are across replicas, or across batches of origins when there is a
/// single replica.
pub fn correlation_simulated(
    g: &DoeblinFunction,
    a: &CylinderEvent,
    b: &CylinderEvent,
    n_max: usize,
    x0: &State,
    key: &RngKey,
    opts: &CorrelationOptions,
) -> Result<CorrelationReport> {
    if opts.replicas == 0 || opts.length == 0 || n_max == 0 {
        return Err(Error::InvalidParameter("replicas, length and n_max must be ≥ 1".into()));
    }
    let batches = batch_count(opts);
    if opts.length < batches {
        return Err(Error::InvalidParameter(format!("length {} is shorter than {batches} batches", opts.length)));
    }
    let series = run_replicas(opts.workers, opts.replicas, |r| {
        let mut rng = key.stream("correlation", r as u64);
        simulate_series(g, a, b, n_max, x0, opts, &mut rng)
    })?;
    let units: Vec<&Vec<f64>> = series.iter().flat_map(|s| &s.batches).collect();
    let est = (0..n_max)
        .map(|n| {
            let (m, se) = mean_and_stderr(units.iter().map(|u| u[n]));
            (m.clamp(0.0, 1.0), se)
        })
        .collect();
    let k = series.len() as f64;
    let mu_a = series.iter().map(|s| s.mu_a).sum::<f64>() / k;
    let mu_b = series.iter().map(|s| s.mu_b).sum::<f64>() / k;
    Ok(CorrelationReport::from_estimates("simulated", mu_a, mu_b, est, opts.replicas))
}

pub fn correlation_sequence(
    g: &DoeblinFunction,
    a: &CylinderEvent,
    b: &CylinderEvent,
    n_max: usize,
    method: &CorrelationMethod,
    opts: &CorrelationOptions,
) -> Result<CorrelationReport> {
    match method {
        CorrelationMethod::ExactLocal => correlation_exact(g, a, b, n_max, opts),
        CorrelationMethod::Simulated { x0, key } => correlation_simulated(g, a, b, n_max, x0, key, opts),
    }
}
