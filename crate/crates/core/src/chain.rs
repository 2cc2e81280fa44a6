//! Forward simulation of a single `g`-chain.

use rand::Rng;

use crate::doeblin_fn::DoeblinFunction;
use crate::error::{Error, Result};
use crate::sequence::{State, Symbol};

/// Inverse-CDF draw from a probability vector.
pub fn sample_symbol<R: Rng + ?Sized>(law: &[f64], rng: &mut R) -> Symbol {
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    for (a, p) in law.iter().enumerate() {
        acc += p;
        if u < acc {
            return a as Symbol;
        }
    }
    law.iter().rposition(|&p| p > 0.0).unwrap_or(0) as Symbol
}

/// A `g`-chain `x^(n+1) = a·x^(n)` with `a ~ g(·x^(n))`.
#[derive(Debug, Clone)]
pub struct ChainWalker<'a> {
    g: &'a DoeblinFunction,
    state: State,
    past: Vec<Symbol>,
    law: Vec<f64>,
}

impl<'a> ChainWalker<'a> {
    pub fn new(g: &'a DoeblinFunction, x0: &State) -> Result<Self> {
        if x0.alphabet() != g.alphabet() {
            return Err(Error::AlphabetMismatch { expected: g.alphabet().size(), found: x0.alphabet().size() });
        }
        Ok(Self { g, state: x0.clone(), past: vec![0; g.horizon()], law: vec![0.0; g.alphabet().size()] })
    }

    /// Draws and prepends the next symbol.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Symbol> {
        self.state.fill_prefix(&mut self.past);
        self.g.eval_window(&self.past, &mut self.law)?;
        let a = sample_symbol(&self.law, rng);
        self.state.push_front(a)?;
        Ok(a)
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn into_state(self) -> State {
        self.state
    }
}
