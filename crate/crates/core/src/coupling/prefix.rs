//! Block extensions `ξ_x^b`, their comparison, and the maximal coupling.

use rand::Rng;

use crate::doeblin_fn::DoeblinFunction;
use crate::error::{Error, Result};
use crate::sequence::{decode_word, encode_word, Alphabet, State, Symbol, Word};

/// Default cap on the number of entries of a prefix table.
pub const DEFAULT_PREFIX_BUDGET: u128 = 1 << 20;

/// Tolerance on the total mass of a prefix table.
pub const PREFIX_MASS_TOL: f64 = 1e-10;

/// Tolerance used when checking the Hellinger inequality chain.
pub const HELLINGER_TOL: f64 = 1e-12;

/// The law of the `b`-symbol prefix `p` prepended to `x` over `b` transitions,
/// `ξ_x^b(p) = Π_{k<b} g(T^k(p·x))`, indexed canonically with `p_0` most
/// significant.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixDistribution {
    alphabet: Alphabet,
    b: usize,
    probs: Vec<f64>,
}

impl PrefixDistribution {
    pub fn new(alphabet: &Alphabet, b: usize, probs: Vec<f64>) -> Result<Self> {
        let len = alphabet.word_count(b).unwrap_or(u128::MAX);
        if probs.len() as u128 != len {
            return Err(Error::DepthMismatch(format!("A^{b} has {len} words, table has {}", probs.len())));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::Domain(format!("invalid probability {p}")));
        }
        let mass: f64 = probs.iter().sum();
        if (mass - 1.0).abs() > PREFIX_MASS_TOL {
            return Err(Error::Domain(format!("prefix table has mass {mass}")));
        }
        Ok(Self { alphabet: alphabet.clone(), b, probs })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, p: &[Symbol]) -> f64 {
        self.probs[encode_word(p, self.alphabet.size())]
    }

    /// The word at canonical index `i`.
    pub fn word(&self, i: usize) -> Word {
        let mut w = vec![0; self.b];
        decode_word(i, self.alphabet.size(), &mut w);
        w.into()
    }

    /// Law of the first `len` symbols `p_0 … p_{len-1}`.
    pub fn leading_marginal(&self, len: usize) -> Vec<f64> {
        let chunk = self.alphabet.size().pow((self.b - len.min(self.b)) as u32);
        self.probs.chunks(chunk).map(|c| c.iter().sum()).collect()
    }
}

fn check_budget(alphabet: &Alphabet, b: usize, budget: u128) -> Result<usize> {
    let required = alphabet.word_count(b).unwrap_or(u128::MAX);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    Ok(required as usize)
}

/// Fills `out` (length `|A|^b`) with `ξ^b` for the past window `past`
/// (length ≥ horizon of `g`).
pub(crate) fn prefix_table(g: &DoeblinFunction, past: &[Symbol], b: usize, out: &mut [f64]) -> Result<()> {
    let h = g.horizon();
    let s = g.alphabet().size();
    let mut buf = vec![0; b + h];
    buf[b..].copy_from_slice(&past[..h]);
    let mut walk = Walk { g, s, b, buf, laws: vec![0.0; s * b.max(1)], out };
    walk.extend(b, 1.0, 0)
}

/// Depth-first enumeration of prefixes, `p_{b-1}` first. `buf[k..]` is the
/// past seen by the symbol at position `k - 1`.
struct Walk<'a> {
    g: &'a DoeblinFunction,
    s: usize,
    b: usize,
    buf: Vec<Symbol>,
    laws: Vec<f64>,
    out: &'a mut [f64],
}

impl Walk<'_> {
    fn extend(&mut self, k: usize, mass: f64, index: usize) -> Result<()> {
        if k == 0 {
            self.out[index] = mass;
            return Ok(());
        }
        let (s, pos) = (self.s, k - 1);
        self.g.eval_window(&self.buf[k..], &mut self.laws[pos * s..k * s])?;
        let weight = s.pow((self.b - k) as u32);
        for a in 0..s {
            self.buf[pos] = a as Symbol;
            self.extend(pos, mass * self.laws[pos * s + a], index + a * weight)?;
        }
        Ok(())
    }
}

/// `ξ_x^b` by enumerating `A^b`; refuses when `|A|^b > budget`.
pub fn prefix_dist(g: &DoeblinFunction, x: &State, b: usize, budget: u128) -> Result<PrefixDistribution> {
    if x.alphabet() != g.alphabet() {
        return Err(Error::AlphabetMismatch { expected: g.alphabet().size(), found: x.alphabet().size() });
    }
    let len = check_budget(g.alphabet(), b, budget)?;
    let mut past = vec![0; g.horizon()];
    x.fill_prefix(&mut past);
    let mut probs = vec![0.0; len];
    prefix_table(g, &past, b, &mut probs)?;
    PrefixDistribution::new(g.alphabet(), b, probs)
}

/// Total variation distance and Hellinger integral of two laws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub d_tv: f64,
    pub hellinger: f64,
}

impl Comparison {
    /// `1 − √(1 − H²)`, the Cauchy–Schwarz lower bound on `1 − d_TV`.
    pub fn cauchy_schwarz_bound(&self) -> f64 {
        1.0 - (1.0 - self.hellinger * self.hellinger).max(0.0).sqrt()
    }
}

/// Compares raw probability tables and checks
/// `1 − d_TV ≥ 1 − √(1 − H²) ≥ H²/2` up to [`HELLINGER_TOL`].
pub fn compare_probs(p: &[f64], q: &[f64]) -> Result<Comparison> {
    if p.len() != q.len() {
        return Err(Error::DepthMismatch(format!("tables of length {} and {}", p.len(), q.len())));
    }
    let mut l1 = 0.0;
    let mut h = 0.0;
    for (a, b) in p.iter().zip(q) {
        l1 += (a - b).abs();
        h += (a * b).sqrt();
    }
    let cmp = Comparison { d_tv: (0.5 * l1).min(1.0), hellinger: h.min(1.0) };
    let middle = cmp.cauchy_schwarz_bound();
    let low = 0.5 * cmp.hellinger * cmp.hellinger;
    if 1.0 - cmp.d_tv < middle - HELLINGER_TOL || middle < low - HELLINGER_TOL {
        return Err(Error::ContractViolation(format!(
            "Hellinger chain broken: 1 − d_TV = {}, 1 − √(1 − H²) = {middle}, H²/2 = {low}",
            1.0 - cmp.d_tv
        )));
    }
    Ok(cmp)
}

pub fn compare_prefix_dists(xi: &PrefixDistribution, xi_tilde: &PrefixDistribution) -> Result<Comparison> {
    if xi.b() != xi_tilde.b() || xi.alphabet() != xi_tilde.alphabet() {
        return Err(Error::DepthMismatch(format!("block lengths {} and {}", xi.b(), xi_tilde.b())));
    }
    compare_probs(xi.probs(), xi_tilde.probs())
}

/// A sampler for the maximal coupling of two laws on the same finite set,
/// built from the overlap `min(ξ, ξ̃)` and the two residuals.
#[derive(Debug, Clone)]
pub struct MaximalCoupling {
    overlap_cdf: Vec<f64>,
    left_cdf: Vec<f64>,
    right_cdf: Vec<f64>,
    match_prob: f64,
}

fn cdf(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    weights
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect()
}

fn draw<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let total = *cdf.last().expect("non-empty table");
    let u = rng.random::<f64>() * total;
    let i = cdf.partition_point(|&c| c <= u);
    if i < cdf.len() {
        return i;
    }
    // u rounded up to the total: take the last entry with positive weight
    (0..cdf.len()).rev().find(|&j| j == 0 || cdf[j] > cdf[j - 1]).unwrap_or(0)
}

impl MaximalCoupling {
    pub fn new(p: &[f64], q: &[f64]) -> Result<Self> {
        if p.len() != q.len() || p.is_empty() {
            return Err(Error::DepthMismatch(format!("tables of length {} and {}", p.len(), q.len())));
        }
        let overlap: Vec<f64> = p.iter().zip(q).map(|(a, b)| a.min(*b)).collect();
        let match_prob: f64 = overlap.iter().sum();
        Ok(Self {
            overlap_cdf: cdf(overlap.iter().copied()),
            left_cdf: cdf(p.iter().zip(&overlap).map(|(a, o)| a - o)),
            right_cdf: cdf(q.iter().zip(&overlap).map(|(b, o)| b - o)),
            match_prob,
        })
    }

    /// `1 − d_TV`.
    pub fn match_prob(&self) -> f64 {
        self.match_prob
    }

    /// Indices `(i, j)` with `P(i = j) = 1 − d_TV`; residual draws are
    /// independent and have disjoint supports.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize, bool) {
        let residual = *self.left_cdf.last().unwrap_or(&0.0);
        let u = rng.random::<f64>();
        if u < self.match_prob || residual <= 0.0 || *self.right_cdf.last().unwrap_or(&0.0) <= 0.0 {
            let i = draw(&self.overlap_cdf, rng);
            (i, i, true)
        } else {
            let i = draw(&self.left_cdf, rng);
            let j = draw(&self.right_cdf, rng);
            (i, j, i == j)
        }
    }
}

/// One draw from the maximal coupling of `ξ` and `ξ̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledDraw {
    pub p: Word,
    pub p_tilde: Word,
    pub matched: bool,
}

pub fn maximal_coupling_sample<R: Rng + ?Sized>(
    xi: &PrefixDistribution,
    xi_tilde: &PrefixDistribution,
    rng: &mut R,
) -> Result<CoupledDraw> {
    if xi.b() != xi_tilde.b() {
        return Err(Error::DepthMismatch(format!("block lengths {} and {}", xi.b(), xi_tilde.b())));
    }
    let (i, j, matched) = MaximalCoupling::new(xi.probs(), xi_tilde.probs())?.sample(rng);
    Ok(CoupledDraw { p: xi.word(i), p_tilde: xi_tilde.word(j), matched })
}
