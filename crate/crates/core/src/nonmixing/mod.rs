//! A four-symbol majority-vote Doeblin function with a hidden fair bit, its
//! spin-flip symmetries, and statistics that expose its phase structure.
//!
//! Symbols are pairs `(y, x)` of a fair bit `y` and a spin `x ∈ {−1, +1}`,
//! encoded as `2y + [x = +1]`.

mod bhs;
mod correlation;
mod involution;
mod rule;
mod signature;

pub use bhs::{bhs_function, bhs_next_dist, BhsKernel};
pub use correlation::{
    correlation_exact, correlation_sequence, correlation_simulated, CorrelationMethod, CorrelationOptions,
    CorrelationReport, CylinderEvent, LagEstimate,
};
pub use involution::{
    apply_involution, bijection_deviation, conjugate, verify_symmetries, IdentityCheck, Involution, SymmetryReport,
};
pub use rule::{default_block_rule, BlockRule, DefaultBlockRule, Selection, XI_MAX, XI_MIN};
pub use signature::{
    chain_window, nested_blocks, phase_locked_state, shared_y_coupling, signature_sequence, SharedYReport,
    SignatureReport,
};

use crate::error::{Error, Result};
use crate::sequence::{Alphabet, Symbol};

/// `(y, x)` with `y ∈ {0, 1}` and `x ∈ {−1, +1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PairSymbol {
    pub x: i8,
    pub y: u8,
}

impl PairSymbol {
    pub fn new(x: i8, y: u8) -> Result<Self> {
        if !matches!(x, -1 | 1) || y > 1 {
            return Err(Error::Domain(format!("({y}, {x}) is not a pair symbol")));
        }
        Ok(Self { x, y })
    }

    pub fn symbol(self) -> Symbol {
        (2 * self.y + u8::from(self.x > 0)) as Symbol
    }

    pub fn from_symbol(s: Symbol) -> Self {
        Self { x: spin(s), y: ybit(s) }
    }
}

/// The product alphabet `{0,1} × {−1,+1}`, labelled `0..3`.
pub fn pair_alphabet() -> Alphabet {
    Alphabet::new(vec!['0', '1', '2', '3']).expect("four distinct labels")
}

pub(crate) fn check_pair(alphabet: &Alphabet) -> Result<()> {
    if alphabet != &pair_alphabet() {
        return Err(Error::AlphabetMismatch { expected: 4, found: alphabet.size() });
    }
    Ok(())
}

/// Spin of a symbol. On the two-letter spin alphabet this is `−1` for `-` and
/// `+1` for `+`.
pub fn spin(s: Symbol) -> i8 {
    if s & 1 == 1 {
        1
    } else {
        -1
    }
}

pub fn ybit(s: Symbol) -> u8 {
    s >> 1
}

/// Negates the spin, keeping `y`.
pub fn flip(s: Symbol) -> Symbol {
    s ^ 1
}
