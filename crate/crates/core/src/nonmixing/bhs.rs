use std::sync::Arc;

use super::rule::BlockRule;
use super::{check_pair, pair_alphabet, spin, ybit};
use crate::doeblin_fn::{DoeblinFunction, Kernel, ProbVector};
use crate::error::{Error, Result};
use crate::sequence::{State, Symbol};

/// `y_0` is a fair bit; `x_0` follows the sign of `Σ_{k∈S} x_k` with
/// probability `ξ` and is a fair spin when `S = ∅`.
#[derive(Debug, Clone)]
pub struct BhsKernel {
    rule: Arc<dyn BlockRule>,
}

impl BhsKernel {
    pub fn new(rule: Arc<dyn BlockRule>) -> Self {
        Self { rule }
    }

    pub fn rule(&self) -> &Arc<dyn BlockRule> {
        &self.rule
    }
}

impl Kernel for BhsKernel {
    fn horizon(&self) -> usize {
        self.rule.horizon()
    }

    fn eval(&self, past: &[Symbol], out: &mut [f64]) -> Result<()> {
        let h = self.rule.horizon();
        if past.len() < h {
            return Err(Error::Evaluation(format!("past has {} coordinates, rule reads {h}", past.len())));
        }
        let y_past: Vec<u8> = past[..h].iter().map(|&s| ybit(s)).collect();
        let sel = self.rule.select(&y_past);
        sel.check(h)?;
        let p_up = if sel.s.is_empty() {
            0.5
        } else {
            let sum: i64 = sel.s.iter().map(|&k| i64::from(spin(past[k - 1]))).sum();
            if sum > 0 {
                sel.xi
            } else {
                1.0 - sel.xi
            }
        };
        for y in 0..2 {
            out[2 * y] = 0.5 * (1.0 - p_up);
            out[2 * y + 1] = 0.5 * p_up;
        }
        Ok(())
    }

    fn probability_bounds(&self) -> Option<(f64, f64)> {
        Some((0.125, 0.375))
    }
}

/// The Doeblin function on the pair alphabet induced by `rule`.
pub fn bhs_function(rule: Arc<dyn BlockRule>) -> DoeblinFunction {
    let h = rule.horizon();
    DoeblinFunction::from_kernel(pair_alphabet(), Arc::new(BhsKernel::new(rule)), Some(h), true, "bhs")
}

pub fn bhs_next_dist(rule: Arc<dyn BlockRule>, x: &State) -> Result<ProbVector> {
    check_pair(x.alphabet())?;
    bhs_function(rule).next_dist(x)
}
