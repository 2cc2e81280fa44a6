//! The transfer operator `(Lf)(x) = Σ_a g(a·x) f(a·x)` on cylinder functions,
//! its dual acting on cylinder measures, and stationary laws of local chains.
//!
//! Cylinder tables of depth `N` are indexed by words `x_0 … x_{N-1}` in the
//! canonical lexicographic order (`x_0` most significant). Marginalizing a
//! measure drops the oldest coordinates, i.e. the end of the word.

use crate::doeblin_fn::{variation, DoeblinFunction, VariationMode, VariationOptions, DEFAULT_BUDGET};
use crate::error::{Error, Result};
use crate::sequence::{decode_word, encode_word, Alphabet, State, Symbol, Word};

/// Tolerance on the total mass of a [`CylinderMeasure`].
pub const MASS_TOL: f64 = 1e-12;

fn table_len(alphabet: &Alphabet, depth: usize, budget: u128) -> Result<usize> {
    let required = alphabet.word_count(depth).unwrap_or(u128::MAX);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    Ok(required as usize)
}

/// A real function on `X` that depends only on its first `depth` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderFunction {
    alphabet: Alphabet,
    depth: usize,
    table: Vec<f64>,
}

impl CylinderFunction {
    pub fn new(alphabet: &Alphabet, depth: usize, table: Vec<f64>) -> Result<Self> {
        let len = table_len(alphabet, depth, DEFAULT_BUDGET)?;
        if table.len() != len {
            return Err(Error::DepthMismatch(format!(
                "depth {depth} needs {len} entries, table has {}",
                table.len()
            )));
        }
        if let Some(v) = table.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("cylinder function value {v} is not finite")));
        }
        Ok(Self { alphabet: alphabet.clone(), depth, table })
    }

    pub fn constant(alphabet: &Alphabet, value: f64) -> Result<Self> {
        Self::new(alphabet, 0, vec![value])
    }

    pub fn from_fn(alphabet: &Alphabet, depth: usize, mut f: impl FnMut(&[Symbol]) -> f64) -> Result<Self> {
        let len = table_len(alphabet, depth, DEFAULT_BUDGET)?;
        let mut word = vec![0; depth];
        let table = (0..len)
            .map(|i| {
                decode_word(i, alphabet.size(), &mut word);
                f(&word)
            })
            .collect();
        Self::new(alphabet, depth, table)
    }

    /// The indicator of a union of cylinders `[w]`, all of the same length.
    pub fn indicator(alphabet: &Alphabet, words: &[Word]) -> Result<Self> {
        let depth = words.first().map_or(0, Word::len);
        if words.iter().any(|w| w.len() != depth) {
            return Err(Error::DepthMismatch("indicator words must share one length".into()));
        }
        let mut table = vec![0.0; table_len(alphabet, depth, DEFAULT_BUDGET)?];
        for w in words {
            table[encode_word(w.symbols(), alphabet.size())] = 1.0;
        }
        Self::new(alphabet, depth, table)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Value on any point whose first `depth` coordinates start `word`.
    pub fn value(&self, word: &[Symbol]) -> f64 {
        self.table[encode_word(&word[..self.depth], self.alphabet.size())]
    }

    pub fn eval(&self, x: &State) -> f64 {
        self.value(x.prefix(self.depth).symbols())
    }

    pub fn sup_norm(&self) -> f64 {
        self.table.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// The same function tabulated at a larger depth.
    pub fn lift(&self, depth: usize) -> Result<Self> {
        if depth < self.depth {
            return Err(Error::DepthMismatch(format!("cannot lift depth {} to {depth}", self.depth)));
        }
        let factor = self.alphabet.size().pow((depth - self.depth) as u32);
        let table = self.table.iter().flat_map(|&v| std::iter::repeat_n(v, factor)).collect();
        Self::new(&self.alphabet, depth, table)
    }
}

/// The depth-`N` marginal of a probability measure on `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderMeasure {
    alphabet: Alphabet,
    depth: usize,
    probs: Vec<f64>,
}

impl CylinderMeasure {
    pub fn new(alphabet: &Alphabet, depth: usize, probs: Vec<f64>) -> Result<Self> {
        let len = table_len(alphabet, depth, DEFAULT_BUDGET)?;
        if probs.len() != len {
            return Err(Error::DepthMismatch(format!(
                "depth {depth} needs {len} entries, table has {}",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::Domain(format!("invalid probability {p}")));
        }
        let mass: f64 = probs.iter().sum();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::Domain(format!("cylinder measure has mass {mass}")));
        }
        Ok(Self { alphabet: alphabet.clone(), depth, probs })
    }

    pub fn uniform(alphabet: &Alphabet, depth: usize) -> Result<Self> {
        let len = table_len(alphabet, depth, DEFAULT_BUDGET)?;
        Self::new(alphabet, depth, vec![1.0 / len as f64; len])
    }

    /// The depth-`depth` marginal of the point mass at `x`.
    pub fn point_mass(x: &State, depth: usize) -> Result<Self> {
        let alphabet = x.alphabet();
        let mut probs = vec![0.0; table_len(alphabet, depth, DEFAULT_BUDGET)?];
        probs[encode_word(x.prefix(depth).symbols(), alphabet.size())] = 1.0;
        Self::new(alphabet, depth, probs)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, word: &[Symbol]) -> Result<f64> {
        if word.len() != self.depth {
            return Err(Error::DepthMismatch(format!("word of length {} at depth {}", word.len(), self.depth)));
        }
        Ok(self.probs[encode_word(word, self.alphabet.size())])
    }

    /// Marginal on the first `depth` coordinates.
    pub fn marginal(&self, depth: usize) -> Result<Self> {
        if depth > self.depth {
            return Err(Error::DepthMismatch(format!("cannot marginalize depth {} to {depth}", self.depth)));
        }
        let chunk = self.alphabet.size().pow((self.depth - depth) as u32);
        let probs = self.probs.chunks(chunk).map(|c| c.iter().sum()).collect();
        Self::new(&self.alphabet, depth, probs)
    }

    /// `∫ f dμ`; needs `f.depth ≤ depth`.
    pub fn integrate(&self, f: &CylinderFunction) -> Result<f64> {
        let f = f.lift(self.depth)?;
        Ok(self.probs.iter().zip(f.table()).map(|(p, v)| p * v).sum())
    }

    /// CSV with header `word,probability`, one row per word in canonical order.
    pub fn to_csv(&self) -> Result<String> {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Io(e.to_string());
        writer.write_record(["word", "probability"]).map_err(csv_err)?;
        let mut word = vec![0; self.depth];
        for (i, p) in self.probs.iter().enumerate() {
            decode_word(i, self.alphabet.size(), &mut word);
            writer.write_record([self.alphabet.render(&word), p.to_string()]).map_err(csv_err)?;
        }
        let bytes = writer.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }

    /// Reads the format written by [`CylinderMeasure::to_csv`]; rows must be
    /// in canonical order and cover every word exactly once.
    pub fn from_csv(alphabet: &Alphabet, text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| Error::Parse(e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != ["word", "probability"] {
            return Err(Error::Parse(format!("expected header word,probability, found {headers:?}")));
        }
        let mut depth = None;
        let mut probs = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            let word = alphabet.parse_word(&record[0])?;
            let d = *depth.get_or_insert(word.len());
            if word.len() != d || encode_word(word.symbols(), alphabet.size()) != i {
                return Err(Error::Parse(format!("row {}: word {:?} out of canonical order", i + 2, &record[0])));
            }
            let p = record[1]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", i + 2)))?;
            probs.push(p);
        }
        Self::new(alphabet, depth.unwrap_or(0), probs)
    }
}

/// Controls for the transfer operator on functions that are not exactly
/// representable at the requested depth.
#[derive(Debug, Clone)]
pub struct TransferOptions {
    /// Cap on the depth of results; `None` means exact.
    pub max_depth: Option<usize>,
    /// Largest accumulated sup-norm error accepted by iterates.
    pub error_cap: f64,
    pub budget: u128,
}

impl Default for TransferOptions {
    fn default() -> Self {
        Self { max_depth: None, error_cap: 1e-6, budget: DEFAULT_BUDGET }
    }
}

/// Laws `g(· | w)` for every past window `w` of length `depth`, the rest of
/// the past completed by repeating the first alphabet symbol.
fn law_table(g: &DoeblinFunction, depth: usize, budget: u128) -> Result<Vec<f64>> {
    let s = g.alphabet().size();
    let len = table_len(g.alphabet(), depth, budget / s as u128)?;
    let mut past = vec![0; depth.max(g.horizon())];
    let mut laws = vec![0.0; len * s];
    for (i, law) in laws.chunks_mut(s).enumerate() {
        decode_word(i, s, &mut past[..depth]);
        g.eval_window(&past, law)?;
    }
    Ok(laws)
}

/// `Lf` tabulated at `depth` together with a sup-norm bound on the error
/// caused by evaluating `g` on depth-truncated pasts.
pub fn apply_l_at_depth(g: &DoeblinFunction, f: &CylinderFunction, depth: usize, budget: u128) -> Result<(CylinderFunction, f64)> {
    if g.alphabet() != f.alphabet() {
        return Err(Error::AlphabetMismatch { expected: g.alphabet().size(), found: f.alphabet().size() });
    }
    if depth + 1 < f.depth() {
        return Err(Error::DepthMismatch(format!("Lf of a depth-{} function needs depth ≥ {}", f.depth(), f.depth() - 1)));
    }
    let s = g.alphabet().size();
    let laws = law_table(g, depth, budget)?;
    let lifted = f.lift(depth + 1)?;
    let table: Vec<f64> = laws
        .chunks(s)
        .enumerate()
        .map(|(i, law)| (0..s).map(|a| law[a] * lifted.table()[a * laws.len() / s + i]).sum())
        .collect();
    let error = if depth >= g.read_depth() {
        0.0
    } else {
        let opts = VariationOptions { budget, ..Default::default() };
        let r = variation(g, depth, VariationMode::UpperBound, &opts)
            .or_else(|_| variation(g, depth, VariationMode::Exact, &opts))?
            .value;
        f.sup_norm() * r.exp_m1()
    };
    Ok((CylinderFunction::new(g.alphabet(), depth, table)?, error))
}

/// `(Lf, error_bound)`; the result has depth `max(depth(f) − 1, m)` where
/// `m` is the number of past coordinates `g` reads, unless capped by
/// `opts.max_depth`, in which case the error bound is generally positive.
pub fn apply_l(g: &DoeblinFunction, f: &CylinderFunction, opts: &TransferOptions) -> Result<(CylinderFunction, f64)> {
    let exact = f.depth().saturating_sub(1).max(g.read_depth());
    let depth = match opts.max_depth {
        Some(cap) => exact.min(cap.max(f.depth().saturating_sub(1))),
        None => exact,
    };
    apply_l_at_depth(g, f, depth, opts.budget)
}

/// `L^1 f, …, L^n f` with accumulated error bounds; refuses once the bound
/// passes `opts.error_cap`.
pub fn iterate_l(
    g: &DoeblinFunction,
    f: &CylinderFunction,
    n: usize,
    opts: &TransferOptions,
    mut visit: impl FnMut(usize, &CylinderFunction, f64),
) -> Result<(CylinderFunction, f64)> {
    let mut current = f.clone();
    let mut total = 0.0;
    for k in 1..=n {
        let (next, err) = apply_l(g, &current, opts)?;
        total += err;
        if total > opts.error_cap {
            return Err(Error::TruncationCap { bound: total, cap: opts.error_cap });
        }
        current = next;
        visit(k, &current, total);
    }
    Ok((current, total))
}

/// `(1/n) Σ_{k=1}^n (L^k f)(x)` with its accumulated error bound.
pub fn cesaro_average(g: &DoeblinFunction, f: &CylinderFunction, n: usize, x: &State, opts: &TransferOptions) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidParameter("cesaro_average needs n ≥ 1".into()));
    }
    let mut sum = 0.0;
    let (_, err) = iterate_l(g, f, n, opts, |_, lf, _| sum += lf.eval(x))?;
    Ok((sum / n as f64, err))
}

fn local_depth(g: &DoeblinFunction) -> Result<usize> {
    g.memory_bound()
        .map(|m| m.min(g.horizon()))
        .ok_or_else(|| Error::NonLocal(format!("{} has no memory bound", g.label())))
}

/// One transition of the induced chain on `A^depth`.
fn step(laws: &[f64], s: usize, probs: &[f64], out: &mut [f64]) {
    let block = probs.len() / s;
    for (a, chunk) in out.chunks_mut(block).enumerate() {
        for (j, slot) in chunk.iter_mut().enumerate() {
            *slot = (0..s).map(|c| probs[j * s + c] * laws[(j * s + c) * s + a]).sum();
        }
    }
}

/// `μ` pushed `steps` transitions forward, at the depth of `μ`.
pub fn push_forward(g: &DoeblinFunction, mu: &CylinderMeasure, steps: usize) -> Result<CylinderMeasure> {
    if g.alphabet() != mu.alphabet() {
        return Err(Error::AlphabetMismatch { expected: g.alphabet().size(), found: mu.alphabet().size() });
    }
    if mu.depth() < g.read_depth() {
        return Err(Error::DepthMismatch(format!(
            "measure depth {} is below the {} coordinates g reads",
            mu.depth(),
            g.read_depth()
        )));
    }
    if mu.depth() == 0 {
        return Ok(mu.clone());
    }
    let s = g.alphabet().size();
    let laws = law_table(g, mu.depth(), DEFAULT_BUDGET)?;
    let mut probs = mu.probs().to_vec();
    let mut next = vec![0.0; probs.len()];
    for _ in 0..steps {
        step(&laws, s, &probs, &mut next);
        std::mem::swap(&mut probs, &mut next);
    }
    renormalized(mu.alphabet(), mu.depth(), probs)
}

fn renormalized(alphabet: &Alphabet, depth: usize, mut probs: Vec<f64>) -> Result<CylinderMeasure> {
    let mass: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= mass);
    CylinderMeasure::new(alphabet, depth, probs)
}

/// The stationary law of a local chain, at depth `memory`.
pub fn stationary_local(g: &DoeblinFunction, tol: f64, max_iters: usize) -> Result<CylinderMeasure> {
    stationary_local_at_depth(g, local_depth(g)?, tol, max_iters)
}

/// The stationary law of a local chain at any depth ≥ its memory, by power
/// iteration from the uniform law, stopping once `‖π − L*π‖₁ ≤ tol`.
pub fn stationary_local_at_depth(g: &DoeblinFunction, depth: usize, tol: f64, max_iters: usize) -> Result<CylinderMeasure> {
    let m = local_depth(g)?;
    if depth < m {
        return Err(Error::DepthMismatch(format!("depth {depth} is below memory {m}")));
    }
    let alphabet = g.alphabet();
    if depth == 0 {
        return CylinderMeasure::new(alphabet, 0, vec![1.0]);
    }
    let s = alphabet.size();
    let laws = law_table(g, depth, DEFAULT_BUDGET)?;
    let len = laws.len() / s;
    let mut probs = vec![1.0 / len as f64; len];
    let mut next = vec![0.0; len];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        step(&laws, s, &probs, &mut next);
        residual = probs.iter().zip(&next).map(|(p, q)| (p - q).abs()).sum();
        std::mem::swap(&mut probs, &mut next);
        if residual <= tol {
            return renormalized(alphabet, depth, probs);
        }
    }
    Err(Error::NoConvergence { iterations: max_iters, residual })
}
