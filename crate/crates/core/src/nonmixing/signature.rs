use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use super::rule::BlockRule;
use super::{check_pair, spin, ybit, PairSymbol};
use crate::chain::ChainWalker;
use crate::doeblin_fn::DoeblinFunction;
use crate::error::{Error, Result};
use crate::sequence::{agreement_length, BiState, State, Symbol, TailRule, Word};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SignatureReport {
    pub signs: Vec<i8>,
    /// Smallest `k` with `X_j` constant for `j ≥ k`, provided the final
    /// constant run has length at least two.
    pub stabilization: Option<usize>,
}

impl SignatureReport {
    pub fn all_equal(&self, sign: i8) -> bool {
        self.signs.iter().all(|&s| s == sign)
    }
}

/// `X_k = sign Σ_{t∈C_k} x_t` for each block `C_k`.
pub fn signature_sequence(window: &BiState, blocks: &[Vec<i64>]) -> Result<SignatureReport> {
    let size = window.alphabet().size();
    if size != 2 && size != 4 {
        return Err(Error::AlphabetMismatch { expected: 4, found: size });
    }
    let mut signs = Vec::with_capacity(blocks.len());
    for (k, block) in blocks.iter().enumerate() {
        if block.len() % 2 == 0 {
            return Err(Error::ContractViolation(format!("block {k} has even size {}", block.len())));
        }
        if let Some(t) = block.iter().find(|&&t| t < window.lo() || t > window.hi()) {
            return Err(Error::Domain(format!("block {k} index {t} outside [{}, {}]", window.lo(), window.hi())));
        }
        let sum: i64 = block.iter().map(|&t| i64::from(spin(window.coordinate(t)))).sum();
        signs.push(if sum > 0 { 1 } else { -1 });
    }
    let run = signs.iter().rev().take_while(|&&s| Some(&s) == signs.last()).count();
    let stabilization = (run >= 2 || signs.len() == 1).then(|| signs.len() - run);
    Ok(SignatureReport { signs, stabilization })
}

/// Blocks `C_k = {−(m_k − 1), …, 0}` for odd sizes `m_k`.
pub fn nested_blocks(sizes: &[usize]) -> Result<Vec<Vec<i64>>> {
    sizes
        .iter()
        .map(|&m| {
            if m % 2 == 0 {
                return Err(Error::ContractViolation(format!("block size {m} is even")));
            }
            Ok((-(m as i64 - 1)..=0).collect())
        })
        .collect()
}

/// Runs a `g`-chain from `x0` for `steps` steps and returns the sampled path
/// as a two-sided window: coordinate 0 is the newest symbol, negative
/// coordinates go back through the head of `x0` into its tail. The unobserved
/// future is filled with symbol 0.
pub fn chain_window<R: Rng + ?Sized>(g: &DoeblinFunction, x0: &State, steps: usize, rng: &mut R) -> Result<BiState> {
    let mut walker = ChainWalker::new(g, x0)?;
    for _ in 0..steps {
        walker.step(rng)?;
    }
    let x = walker.into_state();
    let mut window = x.head().into_symbols();
    if window.is_empty() {
        window.push(x.coordinate(0));
    }
    let lo = -(window.len() as i64 - 1);
    let left = if x.head_len() == 0 { shifted_tail(x.tail()) } else { x.tail().clone() };
    window.reverse();
    BiState::new(x.alphabet(), lo, Word::from(window), left, TailRule::Constant(0))
}

fn shifted_tail(t: &TailRule) -> TailRule {
    match t {
        TailRule::Constant(s) => TailRule::Constant(*s),
        TailRule::Periodic(w) => {
            let mut v = w.symbols().to_vec();
            v.rotate_left(1);
            TailRule::Periodic(Word::from(v))
        }
    }
}

/// The constant past with every spin equal to `sign` and `y ≡ 0`.
pub fn phase_locked_state(sign: i8) -> Result<State> {
    State::constant(&super::pair_alphabet(), PairSymbol::new(sign, 0)?.symbol())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SharedYReport {
    pub steps: u64,
    /// First step at which both chains see the same majority sign.
    pub signature_agreement: Option<u64>,
    /// First step after which the spin windows the rule reads coincide;
    /// from then on the two chains are equal.
    pub merge_time: Option<u64>,
}

/// Two spin chains with one shared `y`-stream and one shared uniform per
/// step (a monotone coupling of the two spin laws), started from pasts that
/// share their `y`-components.
pub fn shared_y_coupling<R: Rng + ?Sized>(
    rule: Arc<dyn BlockRule>,
    x_a: &State,
    x_b: &State,
    steps: u64,
    rng: &mut R,
) -> Result<SharedYReport> {
    check_pair(x_a.alphabet())?;
    check_pair(x_b.alphabet())?;
    let h = rule.horizon();
    let (mut a, mut b) = (x_a.clone(), x_b.clone());
    if (0..h).any(|i| ybit(a.coordinate(i)) != ybit(b.coordinate(i))) {
        return Err(Error::Domain("the two pasts must share their y-components".into()));
    }
    let mut pa = vec![0 as Symbol; h];
    let mut pb = vec![0 as Symbol; h];
    let mut y_past = vec![0u8; h];
    let mut report = SharedYReport { steps, signature_agreement: None, merge_time: None };
    for n in 0..steps {
        a.fill_prefix(&mut pa);
        b.fill_prefix(&mut pb);
        if agreement_length(&a, &b, h).value >= h {
            report.merge_time = Some(n);
            report.signature_agreement.get_or_insert(n);
            break;
        }
        for (dst, &s) in y_past.iter_mut().zip(&pa) {
            *dst = ybit(s);
        }
        let sel = rule.select(&y_past);
        sel.check(h)?;
        let up = |past: &[Symbol]| -> (f64, i64) {
            let sum: i64 = sel.s.iter().map(|&k| i64::from(spin(past[k - 1]))).sum();
            let p = if sel.s.is_empty() {
                0.5
            } else if sum > 0 {
                sel.xi
            } else {
                1.0 - sel.xi
            };
            (p, sum.signum())
        };
        let ((p_a, s_a), (p_b, s_b)) = (up(&pa), up(&pb));
        if s_a == s_b && report.signature_agreement.is_none() {
            report.signature_agreement = Some(n);
        }
        let y: u8 = rng.random_range(0..2);
        let u: f64 = rng.random();
        let spin_of = |p: f64| if u < p { 1 } else { -1 };
        a.push_front(PairSymbol { x: spin_of(p_a), y }.symbol())?;
        b.push_front(PairSymbol { x: spin_of(p_b), y }.symbol())?;
    }
    Ok(report)
}
