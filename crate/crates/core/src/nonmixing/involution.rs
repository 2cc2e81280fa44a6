use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use super::{check_pair, flip, pair_alphabet};
use crate::coupling::prefix_dist;
use crate::doeblin_fn::{DoeblinFunction, Kernel};
use crate::error::{Error, Result};
use crate::sequence::{State, Symbol, TailRule, Word};

/// `M` negates every spin. `F` negates the spins at odd coordinates
/// `1, 3, 5, …`, so `x_0` is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Involution {
    M,
    F,
}

fn flip_if(odd_only: bool, i: usize, s: Symbol) -> Symbol {
    if !odd_only || i % 2 == 1 {
        flip(s)
    } else {
        s
    }
}

pub fn apply_involution(v: Involution, x: &State) -> Result<State> {
    check_pair(x.alphabet())?;
    let odd_only = v == Involution::F;
    let head: Vec<Symbol> = x.head().symbols().iter().enumerate().map(|(i, &s)| flip_if(odd_only, i, s)).collect();
    let start = head.len();
    let tail = match (v, x.tail()) {
        (Involution::M, TailRule::Constant(s)) => TailRule::Constant(flip(*s)),
        _ => {
            // an odd period doubles once the alternating sign is folded in
            let p = x.tail().period();
            let period = if odd_only && p % 2 == 1 { 2 * p } else { p };
            let word: Vec<Symbol> =
                (0..period).map(|j| flip_if(odd_only, start + j, x.tail().coordinate(j))).collect();
            TailRule::Periodic(Word::from(word))
        }
    };
    Ok(State::from_raw(x.alphabet(), head, tail))
}

#[derive(Debug)]
struct ConjugateKernel {
    inner: DoeblinFunction,
}

impl Kernel for ConjugateKernel {
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    fn eval(&self, past: &[Symbol], out: &mut [f64]) -> Result<()> {
        // F on a·x fixes a and flips full-string index j+1 for even j
        let flipped: Vec<Symbol> = past.iter().enumerate().map(|(j, &s)| if j % 2 == 0 { flip(s) } else { s }).collect();
        self.inner.eval_window(&flipped, out)
    }

    fn probability_bounds(&self) -> Option<(f64, f64)> {
        self.inner.kernel().probability_bounds()
    }
}

/// `g̃(a·x) = g(F(a·x))`.
pub fn conjugate(g: &DoeblinFunction) -> Result<DoeblinFunction> {
    check_pair(g.alphabet())?;
    let label = format!("conjugate({})", g.label());
    let kernel = ConjugateKernel { inner: g.clone() };
    Ok(DoeblinFunction::from_kernel(pair_alphabet(), Arc::new(kernel), g.memory_bound(), g.is_regular(), label))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub max_deviation: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub horizon: usize,
    pub checks: Vec<IdentityCheck>,
}

impl SymmetryReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.checks.iter().all(|c| c.max_deviation <= tol)
    }

    pub fn check(&self, name: &str) -> Option<&IdentityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub(crate) fn random_pair_state<R: Rng + ?Sized>(rng: &mut R, max_head: usize) -> State {
    let head: Vec<Symbol> = (0..rng.random_range(0..=max_head)).map(|_| rng.random_range(0..4)).collect();
    let tail = match rng.random_range(0..4) {
        0 => TailRule::Constant(rng.random_range(0..4)),
        p => TailRule::Periodic(Word::from((0..p).map(|_| rng.random_range(0..4)).collect::<Vec<Symbol>>())),
    };
    State::from_raw(&pair_alphabet(), head, tail)
}

fn distance(x: &State, y: &State, horizon: usize) -> f64 {
    (0..horizon).filter(|&i| x.coordinate(i) != y.coordinate(i)).count() as f64
}

/// Checks `g∘M = g` (with the induced relabelling of the next symbol) and the
/// map identities `M² = I`, `F² = I`, `MT = TM`, `MF = FM`, `FT = MTF` on
/// random states. Map identities report the number of disagreeing
/// coordinates below `horizon`.
pub fn verify_symmetries<R: Rng + ?Sized>(
    g: &DoeblinFunction,
    samples: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<SymmetryReport> {
    check_pair(g.alphabet())?;
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be ≥ 1".into()));
    }
    let names = ["g(Mx)=g(x)", "M^2=I", "F^2=I", "MT=TM", "MF=FM", "FT=MTF"];
    let mut dev = [0.0f64; 6];
    let m = |x: &State| apply_involution(Involution::M, x);
    let f = |x: &State| apply_involution(Involution::F, x);
    for _ in 0..samples {
        let x = random_pair_state(rng, horizon.max(g.horizon()) + 3);
        let mx = m(&x)?;
        let p = g.next_dist(&x)?;
        let q = g.next_dist(&mx)?;
        let law_gap = (0..4).map(|a| (p[a] - q[flip(a as Symbol) as usize]).abs()).fold(0.0, f64::max);
        let fx = f(&x)?;
        let sides = [
            (m(&mx)?, x.clone()),
            (f(&fx)?, x.clone()),
            (m(&x.shift())?, mx.shift()),
            (m(&fx)?, f(&mx)?),
            (f(&x.shift())?, m(&fx.shift())?),
        ];
        dev[0] = dev[0].max(law_gap);
        for (d, (a, b)) in dev[1..].iter_mut().zip(&sides) {
            *d = d.max(distance(a, b, horizon));
        }
    }
    let checks = names
        .iter()
        .zip(dev)
        .map(|(name, max_deviation)| IdentityCheck { name: (*name).into(), max_deviation, samples })
        .collect();
    Ok(SymmetryReport { horizon, checks })
}

/// Largest entrywise gap between the `n`-block law of the `g`-chain from `x0`
/// and the law of the conjugate chain from `F x0` read through the bijection
/// `p ↦ Mⁿ Fₙ p`, where `Fₙ` negates the spins of `p` at odd positions.
pub fn bijection_deviation(g: &DoeblinFunction, x0: &State, n: usize, budget: u128) -> Result<f64> {
    let gt = conjugate(g)?;
    let xi = prefix_dist(g, x0, n, budget)?;
    let xi_t = prefix_dist(&gt, &apply_involution(Involution::F, x0)?, n, budget)?;
    let mut worst = 0.0f64;
    for (i, &p) in xi.probs().iter().enumerate() {
        let w: Vec<Symbol> = xi
            .word(i)
            .symbols()
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                let s = flip_if(true, k, s);
                if n % 2 == 1 {
                    flip(s)
                } else {
                    s
                }
            })
            .collect();
        worst = worst.max((p - xi_t.prob(&w)).abs());
    }
    Ok(worst)
}
