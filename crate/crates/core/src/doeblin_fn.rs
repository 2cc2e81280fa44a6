//! Doeblin functions: next-symbol laws `a ↦ g(a·x)` given the past `x`.
//!
//! A [`DoeblinFunction`] wraps a [`Kernel`] that reads the first `horizon`
//! coordinates of the past. Variations are computed over that window, so for
//! a horizon-truncated long-range function "exact" means exact for the
//! truncation. Logarithms are natural throughout.
//!
//! Two index conventions meet here. [`variation`] follows the past-agreement
//! convention: `variation(g, n)` is the supremum of `|log g(a·x) − log g(a·y)|`
//! over symbols `a` and pasts with `κ(x, y) ≥ n`. A [`VariationProfile`]
//! stores the full-string variations `r_k = var_k log g`, which equal
//! `variation(g, k − 1)`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngKey;
use crate::sequence::{decode_word, encode_word, Alphabet, State, Symbol};

/// Tolerance on `Σ_a g(a·x) = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Default cap on table sizes enumerated in exact computations.
pub const DEFAULT_BUDGET: u128 = 1 << 22;

/// A probability vector over an alphabet, one entry per symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        check_row(&entries).map_err(Error::Evaluation)?;
        Ok(Self(entries))
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_positive(&self) -> bool {
        self.0.iter().all(|&p| p > 0.0)
    }
}

impl std::ops::Index<usize> for ProbVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn check_row(entries: &[f64]) -> std::result::Result<(), String> {
    if let Some(p) = entries.iter().find(|p| !p.is_finite()) {
        return Err(format!("non-finite probability {p}"));
    }
    if let Some(p) = entries.iter().find(|&&p| p < 0.0) {
        return Err(format!("negative probability {p}"));
    }
    let sum: f64 = entries.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(format!("entries sum to {sum}, not 1"));
    }
    Ok(())
}

/// The computational core of a Doeblin function.
///
/// `eval` receives the past window `x_0 … x_{horizon-1}` and writes
/// `g(a·x)` for every symbol `a`.
pub trait Kernel: Send + Sync + fmt::Debug {
    fn horizon(&self) -> usize;

    fn eval(&self, past: &[Symbol], out: &mut [f64]) -> Result<()>;

    /// An analytic upper bound on `variation(g, n)`, if one is known.
    fn variation_upper_bound(&self, _n: usize) -> Option<f64> {
        None
    }

    /// A closed form for `variation(g, n)`, if one is known.
    fn variation_closed_form(&self, _n: usize) -> Option<f64> {
        None
    }

    /// Known bounds `(lo, hi)` on every probability the kernel emits.
    fn probability_bounds(&self) -> Option<(f64, f64)> {
        None
    }
}

/// A next-symbol law with continuous dependence on the past.
#[derive(Clone)]
pub struct DoeblinFunction {
    alphabet: Alphabet,
    kernel: Arc<dyn Kernel>,
    memory_bound: Option<usize>,
    regular: bool,
    label: String,
}

impl fmt::Debug for DoeblinFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DoeblinFunction")
            .field("label", &self.label)
            .field("alphabet", &self.alphabet)
            .field("horizon", &self.horizon())
            .field("memory_bound", &self.memory_bound)
            .field("regular", &self.regular)
            .finish()
    }
}

impl DoeblinFunction {
    /// Wraps a user kernel. `memory_bound` must be `Some(m)` only if the
    /// kernel really ignores coordinates `≥ m`.
    pub fn from_kernel(
        alphabet: Alphabet,
        kernel: Arc<dyn Kernel>,
        memory_bound: Option<usize>,
        regular: bool,
        label: impl Into<String>,
    ) -> Self {
        Self { alphabet, kernel, memory_bound, regular, label: label.into() }
    }

    /// The i.i.d. uniform law.
    pub fn uniform(alphabet: &Alphabet) -> Self {
        let rows = [vec![1.0 / alphabet.size() as f64; alphabet.size()]];
        let kernel = TableKernel { memory: 0, size: alphabet.size(), rows: rows.concat() };
        Self::from_kernel(alphabet.clone(), Arc::new(kernel), Some(0), true, "uniform")
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn horizon(&self) -> usize {
        self.kernel.horizon()
    }

    pub fn memory_bound(&self) -> Option<usize> {
        self.memory_bound
    }

    /// Number of past coordinates that determine the law: the memory bound
    /// when known, else the horizon.
    pub fn read_depth(&self) -> usize {
        self.memory_bound.unwrap_or_else(|| self.horizon()).min(self.horizon())
    }

    pub fn is_regular(&self) -> bool {
        self.regular
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kernel(&self) -> &Arc<dyn Kernel> {
        &self.kernel
    }

    pub(crate) fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Raw evaluation on a past window of length ≥ `horizon`; no checks.
    pub fn eval_window(&self, past: &[Symbol], out: &mut [f64]) -> Result<()> {
        self.kernel.eval(&past[..self.horizon()], out)
    }

    /// The law of the next symbol given the past `x`.
    pub fn next_dist(&self, x: &State) -> Result<ProbVector> {
        if x.alphabet() != &self.alphabet {
            return Err(Error::AlphabetMismatch {
                expected: self.alphabet.size(),
                found: x.alphabet().size(),
            });
        }
        let mut past = vec![0; self.horizon()];
        x.fill_prefix(&mut past);
        let mut out = vec![0.0; self.alphabet.size()];
        self.kernel.eval(&past, &mut out)?;
        ProbVector::new(out)
    }
}

#[derive(Debug)]
struct TableKernel {
    memory: usize,
    size: usize,
    rows: Vec<f64>,
}

impl Kernel for TableKernel {
    fn horizon(&self) -> usize {
        self.memory
    }

    fn eval(&self, past: &[Symbol], out: &mut [f64]) -> Result<()> {
        let row = encode_word(&past[..self.memory], self.size);
        out.copy_from_slice(&self.rows[row * self.size..(row + 1) * self.size]);
        Ok(())
    }

    fn variation_upper_bound(&self, n: usize) -> Option<f64> {
        if n >= self.memory {
            return Some(0.0);
        }
        let (lo, hi) = self.probability_bounds()?;
        Some(if lo > 0.0 { (hi / lo).ln() } else { f64::INFINITY })
    }

    fn probability_bounds(&self) -> Option<(f64, f64)> {
        let lo = self.rows.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.rows.iter().copied().fold(0.0, f64::max);
        Some((lo, hi))
    }
}

/// A local Doeblin function reading the past `x_0 … x_{m-1}`; `rows` lists
/// one law per word of `A^m` in canonical order.
pub fn local_table(alphabet: &Alphabet, memory: usize, rows: Vec<Vec<f64>>) -> Result<DoeblinFunction> {
    let size = alphabet.size();
    let expected = alphabet
        .word_count(memory)
        .filter(|&n| n <= DEFAULT_BUDGET)
        .ok_or(Error::BudgetExceeded { required: u128::MAX, budget: DEFAULT_BUDGET })?
        as usize;
    let mut word = vec![0; memory];
    let render = |i: usize, word: &mut Vec<Symbol>| {
        decode_word(i, size, word);
        alphabet.render(word)
    };
    if rows.len() < expected {
        return Err(Error::MissingRow { row: render(rows.len(), &mut word) });
    }
    if rows.len() > expected {
        return Err(Error::BadRow {
            row: format!("#{}", expected),
            reason: format!("table has {} rows, A^{memory} has {expected}", rows.len()),
        });
    }
    let mut flat = Vec::with_capacity(expected * size);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != size {
            return Err(Error::BadRow {
                row: render(i, &mut word),
                reason: format!("expected {size} entries, found {}", row.len()),
            });
        }
        check_row(row).map_err(|reason| Error::BadRow { row: render(i, &mut word), reason })?;
        flat.extend_from_slice(row);
    }
    let regular = flat.iter().all(|&p| p > 0.0);
    let kernel = TableKernel { memory, size, rows: flat };
    Ok(DoeblinFunction::from_kernel(
        alphabet.clone(),
        Arc::new(kernel),
        Some(memory),
        regular,
        format!("table(m={memory})"),
    ))
}

/// Like [`local_table`] but keyed by rendered words.
pub fn local_table_from_map(
    alphabet: &Alphabet,
    memory: usize,
    rows: &BTreeMap<String, Vec<f64>>,
) -> Result<DoeblinFunction> {
    let count = alphabet
        .word_count(memory)
        .filter(|&n| n <= DEFAULT_BUDGET)
        .ok_or(Error::BudgetExceeded { required: u128::MAX, budget: DEFAULT_BUDGET })?
        as usize;
    let mut ordered = vec![None; count];
    for (key, row) in rows {
        let word = alphabet.parse_word(key).map_err(|e| Error::BadRow { row: key.clone(), reason: e.to_string() })?;
        if word.len() != memory {
            return Err(Error::BadRow {
                row: key.clone(),
                reason: format!("key has length {}, memory is {memory}", word.len()),
            });
        }
        ordered[encode_word(word.symbols(), alphabet.size())] = Some(row.clone());
    }
    let mut word = vec![0; memory];
    let mut table = Vec::with_capacity(count);
    for (i, row) in ordered.into_iter().enumerate() {
        match row {
            Some(r) => table.push(r),
            None => {
                decode_word(i, alphabet.size(), &mut word);
                return Err(Error::MissingRow { row: alphabet.render(&word) });
            }
        }
    }
    local_table(alphabet, memory, table)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFile {
    alphabet: String,
    memory: usize,
    rows: toml::Table,
}

/// Loads a local table from TOML text:
///
/// ```toml
/// alphabet = "01"
/// memory = 1
/// [rows]
/// "0" = [0.7, 0.3]
/// "1" = [0.4, 0.6]
/// ```
pub fn parse_local_table(text: &str) -> Result<DoeblinFunction> {
    let file: TableFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let alphabet = Alphabet::new(file.alphabet.chars().collect())?;
    let mut rows = BTreeMap::new();
    for (key, value) in &file.rows {
        let bad = |reason: String| Error::BadRow { row: key.clone(), reason };
        let entries = value
            .as_array()
            .ok_or_else(|| bad("expected an array of probabilities".into()))?
            .iter()
            .map(|v| match v {
                toml::Value::Float(f) => Ok(*f),
                toml::Value::Integer(i) => Ok(*i as f64),
                other => Err(bad(format!("{other} is not a number"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.insert(key.clone(), entries);
    }
    local_table_from_map(&alphabet, file.memory, &rows)
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        -(-t).exp().ln_1p()
    } else {
        t - t.exp().ln_1p()
    }
}

/// Logistic single-site field on `{-1,+1}`: `g(+1·x) = σ(Σ_k β_k x_{k-1})`.
#[derive(Debug, Clone)]
pub struct EnvelopeKernel {
    betas: Vec<f64>,
    /// `tails[j] = Σ_{k > j} β_k`, i.e. the field mass of past coordinates `≥ j`.
    tails: Vec<f64>,
}

impl EnvelopeKernel {
    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    fn field(&self, past: &[Symbol]) -> f64 {
        self.betas
            .iter()
            .zip(past)
            .map(|(b, &s)| if s == 1 { *b } else { -*b })
            .sum()
    }
}

impl Kernel for EnvelopeKernel {
    fn horizon(&self) -> usize {
        self.betas.len()
    }

    fn eval(&self, past: &[Symbol], out: &mut [f64]) -> Result<()> {
        let phi = self.field(past);
        out[1] = sigmoid(phi);
        out[0] = sigmoid(-phi);
        Ok(())
    }

    fn variation_upper_bound(&self, n: usize) -> Option<f64> {
        // log σ is 1-Lipschitz
        Some(2.0 * self.tails.get(n).copied().unwrap_or(0.0))
    }

    fn variation_closed_form(&self, n: usize) -> Option<f64> {
        let free = self.tails.get(n).copied().unwrap_or(0.0);
        if free == 0.0 {
            return Some(0.0);
        }
        let fixed = self.tails[0] - free;
        // log σ(F+T) − log σ(F−T) is decreasing in F; worst case F = −fixed
        Some(log_sigmoid(free - fixed) - log_sigmoid(-free - fixed))
    }

    fn probability_bounds(&self) -> Option<(f64, f64)> {
        let total = self.tails.first().copied().unwrap_or(0.0);
        Some((sigmoid(-total), sigmoid(total)))
    }
}

/// What [`envelope_family`] certified about its output.
#[derive(Debug, Clone)]
pub struct EnvelopeCertificate {
    pub c: f64,
    pub horizon: usize,
    /// Exact full-string variations `r_1 … r_H` (zero beyond).
    pub profile: VariationProfile,
    /// `max_k r_k √k`; at most `c`.
    pub max_scaled: f64,
    /// Largest range `[from, to]` of k on which `r_k ≥ c / (2√k)`, if any.
    pub lower_range: Option<(usize, usize)>,
}

/// A regular Doeblin function on `{-1,+1}` with `var_k log g ≤ c/√k` for
/// `1 ≤ k ≤ horizon`, and zero beyond.
///
/// Coefficients telescope, `β_k = (c/2)(k^{-1/2} − (k+1)^{-1/2})` for
/// `k < horizon` and `β_horizon = (c/2) horizon^{-1/2}`, so the field mass of
/// coordinates `≥ k−1` is exactly `c/(2√k)`. The envelope is then checked
/// against the exact variation, not assumed.
pub fn envelope_family(c: f64, horizon: usize) -> Result<(DoeblinFunction, EnvelopeCertificate)> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("envelope constant c = {c} must be finite and ≥ 0")));
    }
    if horizon == 0 {
        return Err(Error::Construction("horizon 0 cannot realize any envelope; need horizon ≥ 1".into()));
    }
    let half = c / 2.0;
    let betas: Vec<f64> = (1..=horizon)
        .map(|k| {
            let k = k as f64;
            if k < horizon as f64 {
                half * (k.powf(-0.5) - (k + 1.0).powf(-0.5))
            } else {
                half * k.powf(-0.5)
            }
        })
        .collect();
    let mut tails = vec![0.0; horizon + 1];
    for j in (0..horizon).rev() {
        tails[j] = tails[j + 1] + betas[j];
    }
    let kernel = EnvelopeKernel { betas, tails };
    let values: Vec<f64> = (0..horizon)
        .map(|n| kernel.variation_closed_form(n).unwrap_or(f64::NAN))
        .collect();
    let g = DoeblinFunction::from_kernel(
        Alphabet::spins(),
        Arc::new(kernel),
        None,
        true,
        format!("envelope(c={c},H={horizon})"),
    );
    let profile = VariationProfile {
        values,
        modes: vec![VariationMode::Exact; horizon],
        zero_beyond: true,
    };
    let max_scaled = profile
        .values
        .iter()
        .enumerate()
        .map(|(i, r)| r * ((i + 1) as f64).sqrt())
        .fold(0.0, f64::max);
    if max_scaled > c * (1.0 + 1e-12) {
        return Err(Error::Construction(format!(
            "certification failed: max r_k·√k = {max_scaled} exceeds c = {c}"
        )));
    }
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for k in 1..=horizon + 1 {
        let ok = k <= horizon && c > 0.0 && profile.values[k - 1] >= c / (2.0 * (k as f64).sqrt());
        match (ok, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                if best.is_none_or(|(a, b)| k - 1 - s > b - a) {
                    best = Some((s, k - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    let certificate = EnvelopeCertificate { c, horizon, profile, max_scaled, lower_range: best };
    Ok((g, certificate))
}

/// How a variation value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariationMode {
    Exact,
    UpperBound,
    SampledLowerBound,
}

/// Which function's variation to measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    #[default]
    LogG,
    G,
}

#[derive(Debug, Clone)]
pub struct VariationOptions {
    pub budget: u128,
    pub samples: usize,
    pub seed: u64,
    pub observable: Observable,
}

impl Default for VariationOptions {
    fn default() -> Self {
        Self { budget: DEFAULT_BUDGET, samples: 10_000, seed: 0, observable: Observable::LogG }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variation {
    pub value: f64,
    pub mode: VariationMode,
}

fn observe(p: f64, observable: Observable) -> f64 {
    match observable {
        Observable::LogG => p.ln(),
        Observable::G => p,
    }
}

fn spread(hi: f64, lo: f64) -> f64 {
    if hi == lo {
        0.0
    } else {
        hi - lo
    }
}

/// `variation(g, n)` by enumerating every past window.
pub fn variation_exact(g: &DoeblinFunction, n: usize, budget: u128, observable: Observable) -> Result<f64> {
    Ok(variation_exact_by_symbol(g, n, budget, observable)?.into_iter().fold(0.0, f64::max))
}

/// The per-symbol suprema behind [`variation_exact`]: entry `a` is the
/// supremum of `|log g(a·x) − log g(a·y)|` over pasts with `κ(x, y) ≥ n`.
pub fn variation_exact_by_symbol(
    g: &DoeblinFunction,
    n: usize,
    budget: u128,
    observable: Observable,
) -> Result<Vec<f64>> {
    let h = g.horizon();
    let s = g.alphabet().size();
    if n >= g.read_depth() {
        return Ok(vec![0.0; s]);
    }
    let required = g
        .alphabet()
        .word_count(h + 1)
        .ok_or(Error::BudgetExceeded { required: u128::MAX, budget })?;
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let prefixes = s.pow(n as u32);
    let suffixes = s.pow((h - n) as u32);
    let mut past = vec![0; h];
    let mut out = vec![0.0; s];
    let mut hi = vec![f64::NEG_INFINITY; s];
    let mut lo = vec![f64::INFINITY; s];
    let mut worst = vec![0.0f64; s];
    for u in 0..prefixes {
        decode_word(u, s, &mut past[..n]);
        hi.fill(f64::NEG_INFINITY);
        lo.fill(f64::INFINITY);
        for v in 0..suffixes {
            decode_word(v, s, &mut past[n..]);
            g.kernel().eval(&past, &mut out)?;
            for a in 0..s {
                let val = observe(out[a], observable);
                if val.is_nan() {
                    return Err(Error::Evaluation(format!("g returned {}", out[a])));
                }
                hi[a] = hi[a].max(val);
                lo[a] = lo[a].min(val);
            }
        }
        for a in 0..s {
            worst[a] = worst[a].max(spread(hi[a], lo[a]));
        }
    }
    Ok(worst)
}

/// A cheap upper bound on `variation(g, n)`.
pub fn variation_upper_bound(g: &DoeblinFunction, n: usize, observable: Observable) -> Result<f64> {
    if n >= g.read_depth() {
        return Ok(0.0);
    }
    let kernel = g.kernel();
    match observable {
        Observable::LogG => kernel
            .variation_upper_bound(n)
            .or_else(|| kernel.probability_bounds().map(|(lo, hi)| if lo > 0.0 { (hi / lo).ln() } else { f64::INFINITY })),
        Observable::G => kernel.probability_bounds().map(|(lo, hi)| hi - lo),
    }
    .ok_or_else(|| Error::Evaluation(format!("no upper bound available for {}", g.label())))
}

/// A lower bound on `variation(g, n)` from random pairs of pasts.
pub fn variation_sampled<R: Rng + ?Sized>(
    g: &DoeblinFunction,
    n: usize,
    samples: usize,
    observable: Observable,
    rng: &mut R,
) -> Result<f64> {
    let h = g.horizon();
    if n >= g.read_depth() {
        return Ok(0.0);
    }
    let s = g.alphabet().size();
    let mut x = vec![0; h];
    let mut y = vec![0; h];
    let mut gx = vec![0.0; s];
    let mut gy = vec![0.0; s];
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        for i in 0..h {
            x[i] = rng.random_range(0..s) as Symbol;
            y[i] = if i < n { x[i] } else { rng.random_range(0..s) as Symbol };
        }
        g.kernel().eval(&x, &mut gx)?;
        g.kernel().eval(&y, &mut gy)?;
        for a in 0..s {
            let (u, v) = (observe(gx[a], observable), observe(gy[a], observable));
            worst = worst.max(spread(u.max(v), u.min(v)));
        }
    }
    Ok(worst)
}

/// `variation(g, n)` in the requested mode. Exact mode uses enumeration when
/// within budget, otherwise a closed form if the kernel has one, otherwise
/// refuses.
pub fn variation(g: &DoeblinFunction, n: usize, mode: VariationMode, opts: &VariationOptions) -> Result<Variation> {
    let value = match mode {
        VariationMode::Exact => match variation_exact(g, n, opts.budget, opts.observable) {
            Err(e @ Error::BudgetExceeded { .. }) => match (opts.observable, g.kernel().variation_closed_form(n)) {
                (Observable::LogG, Some(v)) => v,
                _ => return Err(e),
            },
            other => other?,
        },
        VariationMode::UpperBound => variation_upper_bound(g, n, opts.observable)?,
        VariationMode::SampledLowerBound => {
            let mut rng = RngKey::new(opts.seed).stream("variation", n as u64);
            variation_sampled(g, n, opts.samples, opts.observable, &mut rng)?
        }
    };
    Ok(Variation { value, mode })
}

/// Full-string log-variations `r_1, r_2, …` with the mode of each entry.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationProfile {
    values: Vec<f64>,
    modes: Vec<VariationMode>,
    zero_beyond: bool,
}

impl VariationProfile {
    /// An explicit profile `values[k-1] = r_k`, undefined beyond its length.
    pub fn new(values: Vec<f64>, mode: VariationMode) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| v.is_nan() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!("variation {v} must be ≥ 0")));
        }
        let modes = vec![mode; values.len()];
        Ok(Self { values, modes, zero_beyond: false })
    }

    /// `r_k = f(k)` for `1 ≤ k ≤ len`.
    pub fn from_fn(len: usize, mode: VariationMode, f: impl Fn(usize) -> f64) -> Result<Self> {
        Self::new((1..=len).map(f).collect(), mode)
    }

    /// Marks every `r_k` beyond the stored length as exactly zero.
    pub fn with_zero_tail(mut self) -> Self {
        self.zero_beyond = true;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn modes(&self) -> &[VariationMode] {
        &self.modes
    }

    pub fn zero_beyond(&self) -> bool {
        self.zero_beyond
    }

    /// `r_k` for `k ≥ 1`.
    pub fn r(&self, k: usize) -> Result<f64> {
        if k == 0 {
            return Err(Error::InvalidParameter("profiles start at r_1".into()));
        }
        match self.values.get(k - 1) {
            Some(v) => Ok(*v),
            None if self.zero_beyond => Ok(0.0),
            None => Err(Error::ProfileTooShort { needed: k, available: self.values.len() }),
        }
    }

    /// Whether `r_k` is available for every `k ≤ upto`.
    pub fn covers(&self, upto: usize) -> bool {
        self.zero_beyond || upto <= self.values.len()
    }
}

/// `r_k = variation(g, k−1)` for `1 ≤ k ≤ horizon`, zero beyond.
pub fn variation_profile(g: &DoeblinFunction, mode: VariationMode, opts: &VariationOptions) -> Result<VariationProfile> {
    let depth = g.read_depth();
    let mut values = Vec::with_capacity(depth);
    let mut modes = Vec::with_capacity(depth);
    for n in 0..depth {
        let v = variation(g, n, mode, opts)?;
        values.push(v.value);
        modes.push(v.mode);
    }
    Ok(VariationProfile { values, modes, zero_beyond: true })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityCheck {
    pub min_observed_prob: f64,
    pub regular: bool,
}

/// Smallest `g(a·x)` over `trials` random pasts and all symbols.
pub fn check_regular<R: Rng + ?Sized>(g: &DoeblinFunction, trials: usize, rng: &mut R) -> Result<RegularityCheck> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be ≥ 1".into()));
    }
    let s = g.alphabet().size();
    let mut past = vec![0; g.horizon()];
    let mut out = vec![0.0; s];
    let mut min = f64::INFINITY;
    for _ in 0..trials {
        for slot in past.iter_mut() {
            *slot = rng.random_range(0..s) as Symbol;
        }
        g.kernel().eval(&past, &mut out)?;
        min = out.iter().copied().fold(min, f64::min);
    }
    Ok(RegularityCheck { min_observed_prob: min, regular: min > 0.0 })
}

/// The two-state fixture used across the test-suite: `g(0·x) = 0.7` if
/// `x_0 = 0` and `0.4` if `x_0 = 1`.
pub fn two_state_fixture() -> DoeblinFunction {
    local_table(&Alphabet::binary(), 1, vec![vec![0.7, 0.3], vec![0.4, 0.6]])
        .expect("fixture rows are valid")
        .with_label("two_state")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::TailRule;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn bin(text: &str) -> State {
        State::parse(&Alphabet::binary(), text).unwrap()
    }

    #[test]
    fn uniform_and_table_lookups() {
        let u = DoeblinFunction::uniform(&Alphabet::binary());
        assert_eq!(u.next_dist(&bin("0110|c1")).unwrap().entries(), &[0.5, 0.5]);
        let g = two_state_fixture();
        assert_eq!(g.next_dist(&bin("|c0")).unwrap().entries(), &[0.7, 0.3]);
        assert_eq!(g.next_dist(&bin("1|c0")).unwrap().entries(), &[0.4, 0.6]);
        assert!(g.next_dist(&State::constant(&Alphabet::spins(), 0).unwrap()).is_err());
    }

    #[test]
    fn table_errors_cite_rows() {
        let a = Alphabet::binary();
        let err = local_table(&a, 1, vec![vec![0.7, 0.3]]).unwrap_err();
        assert_eq!(err, Error::MissingRow { row: "1".into() });
        let err = local_table(&a, 1, vec![vec![0.7, 0.3], vec![0.5, 0.6]]).unwrap_err();
        assert!(matches!(err, Error::BadRow { ref row, .. } if row == "1"), "{err}");
        let text = "alphabet = \"01\"\nmemory = 2\n[rows]\n\"00\" = [0.5, 0.5]\n\"01\" = [0.5, 0.5]\n\"10\" = [0.5, \"x\"]\n\"11\" = [1, 0]\n";
        let err = parse_local_table(text).unwrap_err();
        assert!(err.to_string().contains("\"10\""), "{err}");
        let missing = "alphabet = \"01\"\nmemory = 1\n[rows]\n\"0\" = [0.5, 0.5]\n";
        assert_eq!(parse_local_table(missing).unwrap_err(), Error::MissingRow { row: "1".into() });
        let unknown = "alphabet = \"01\"\nmemory = 0\ncolour = 1\n[rows]\n\"\" = [0.5, 0.5]\n";
        assert!(matches!(parse_local_table(unknown), Err(Error::Parse(_))));
    }

    #[test]
    fn parsed_table_matches_fixture() {
        let text = "alphabet = \"01\"\nmemory = 1\n[rows]\n\"0\" = [0.7, 0.3]\n\"1\" = [0.4, 0.6]\n";
        let g = parse_local_table(text).unwrap();
        let f = two_state_fixture();
        for x in ["|c0", "|c1", "01|p10"] {
            assert_eq!(g.next_dist(&bin(x)).unwrap(), f.next_dist(&bin(x)).unwrap());
        }
    }

    #[test]
    fn non_finite_user_kernel_is_an_evaluation_error() {
        #[derive(Debug)]
        struct Broken;
        impl Kernel for Broken {
            fn horizon(&self) -> usize {
                1
            }
            fn eval(&self, _: &[Symbol], out: &mut [f64]) -> Result<()> {
                out[0] = f64::NAN;
                out[1] = 0.5;
                Ok(())
            }
        }
        let g = DoeblinFunction::from_kernel(Alphabet::binary(), Arc::new(Broken), None, false, "broken");
        assert!(matches!(g.next_dist(&bin("|c0")), Err(Error::Evaluation(_))));
    }

    #[test]
    fn two_state_variation() {
        let g = two_state_fixture();
        let r0 = variation_exact(&g, 0, DEFAULT_BUDGET, Observable::LogG).unwrap();
        let oracle = (0.7f64.ln() - 0.4f64.ln()).abs().max((0.3f64.ln() - 0.6f64.ln()).abs());
        assert!((r0 - oracle).abs() < 1e-15);
        // rows differ most in the second symbol: |log 0.3 − log 0.6| = ln 2
        assert!((r0 - 2f64.ln()).abs() < 1e-15);
        let by_symbol = variation_exact_by_symbol(&g, 0, DEFAULT_BUDGET, Observable::LogG).unwrap();
        assert!((by_symbol[0] - 0.5596).abs() < 1e-4);
        assert!((by_symbol[1] - 2f64.ln()).abs() < 1e-15);
        for n in 1..4 {
            assert_eq!(variation_exact(&g, n, DEFAULT_BUDGET, Observable::LogG).unwrap(), 0.0);
        }
        assert_eq!(variation_upper_bound(&g, 1, Observable::LogG).unwrap(), 0.0);
    }

    #[test]
    fn envelope_closed_form_matches_enumeration() {
        for c in [0.5, 1.0, 1.9] {
            let (g, cert) = envelope_family(c, 10).unwrap();
            for n in 0..12 {
                let exact = variation_exact(&g, n, DEFAULT_BUDGET, Observable::LogG).unwrap();
                let closed = g.kernel().variation_closed_form(n).unwrap();
                assert!((exact - closed).abs() < 1e-12, "c={c} n={n}: {exact} vs {closed}");
                let upper = variation_upper_bound(&g, n, Observable::LogG).unwrap();
                assert!(exact <= upper + 1e-15);
                if n < 10 {
                    assert!((upper - c / ((n + 1) as f64).sqrt()).abs() < 1e-12);
                    assert_eq!(cert.profile.r(n + 1).unwrap(), closed);
                }
            }
            assert!(cert.max_scaled <= c);
        }
    }

    #[test]
    fn envelope_flip_bound_and_monotonicity() {
        let (g, cert) = envelope_family(1.0, 8).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..500 {
            let n = rng.random_range(0..8);
            let x: Vec<Symbol> = (0..8).map(|_| rng.random_range(0..2)).collect();
            let mut y = x.clone();
            for s in y.iter_mut().skip(n) {
                *s = rng.random_range(0..2);
            }
            let (mut gx, mut gy) = ([0.0; 2], [0.0; 2]);
            g.eval_window(&x, &mut gx).unwrap();
            g.eval_window(&y, &mut gy).unwrap();
            let r = cert.profile.r(n + 1).unwrap();
            for a in 0..2 {
                assert!((gx[a].ln() - gy[a].ln()).abs() <= r + 1e-12);
            }
        }
        let v = cert.profile.values();
        assert!(v.windows(2).all(|w| w[0] >= w[1]));
        assert!(cert.lower_range.is_some());
    }

    #[test]
    fn envelope_zero_constant_is_uniform() {
        let (g, cert) = envelope_family(0.0, 5).unwrap();
        assert_eq!(g.next_dist(&State::constant(&Alphabet::spins(), 1).unwrap()).unwrap().entries(), &[0.5, 0.5]);
        assert!(cert.profile.values().iter().all(|&r| r == 0.0));
        assert!(envelope_family(1.0, 0).is_err());
        assert!(envelope_family(-1.0, 4).is_err());
    }

    #[test]
    fn sampled_never_exceeds_exact() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for i in 0..100 {
            let c = rng.random_range(0.1..3.0);
            let h = rng.random_range(1..9);
            let n = rng.random_range(0..h + 1);
            let (g, _) = envelope_family(c, h).unwrap();
            let exact = variation_exact(&g, n, DEFAULT_BUDGET, Observable::LogG).unwrap();
            let sampled = variation_sampled(&g, n, 200, Observable::LogG, &mut rng).unwrap();
            let upper = variation_upper_bound(&g, n, Observable::LogG).unwrap();
            assert!(sampled <= exact + 1e-15 && exact <= upper + 1e-15, "fixture {i}");
        }
    }

    #[test]
    fn exact_mode_refuses_beyond_budget() {
        let g = local_table(&Alphabet::binary(), 3, vec![vec![0.5, 0.5]; 8]).unwrap();
        assert!(matches!(variation_exact(&g, 0, 8, Observable::LogG), Err(Error::BudgetExceeded { required: 16, budget: 8 })));
        let opts = VariationOptions { budget: 8, ..Default::default() };
        // a table has no closed form, so exact mode refuses
        assert!(variation(&g, 0, VariationMode::Exact, &opts).is_err());
        let (env, _) = envelope_family(1.0, 12).unwrap();
        let v = variation(&env, 2, VariationMode::Exact, &opts).unwrap();
        assert_eq!(v.mode, VariationMode::Exact);
    }

    #[test]
    fn var_of_g_profile_is_exposed() {
        let g = two_state_fixture();
        let opts = VariationOptions { observable: Observable::G, ..Default::default() };
        let v = variation(&g, 0, VariationMode::Exact, &opts).unwrap();
        assert!((v.value - 0.3).abs() < 1e-15);
    }

    #[test]
    fn regularity_checks() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let u = DoeblinFunction::uniform(&Alphabet::binary());
        assert_eq!(check_regular(&u, 10, &mut rng).unwrap().min_observed_prob, 0.5);
        let (env, _) = envelope_family(1.0, 12).unwrap();
        assert!(check_regular(&env, 1000, &mut rng).unwrap().regular);
        let zero = local_table(&Alphabet::binary(), 1, vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        assert!(!zero.is_regular());
        assert!(!check_regular(&zero, 100, &mut rng).unwrap().regular);
        assert!(check_regular(&u, 0, &mut rng).is_err());
    }

    #[test]
    fn memory_measurability_under_coordinate_surgery() {
        let g = two_state_fixture();
        let a = Alphabet::binary();
        let base = State::new(&a, a.parse_word("0110").unwrap(), TailRule::Constant(1)).unwrap();
        let mut head = base.head().into_symbols();
        head[2] ^= 1;
        head[3] ^= 1;
        let other = State::new(&a, head.into(), TailRule::Constant(0)).unwrap();
        assert_eq!(g.next_dist(&base).unwrap(), g.next_dist(&other).unwrap());
    }
}
