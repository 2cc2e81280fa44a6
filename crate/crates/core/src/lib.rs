//! Chains with complete connections driven by Doeblin functions.
//!
//! The crate covers one-sided shift states, next-symbol laws with fading
//! memory, the transfer operator and its stationary measures, block couplings
//! of two chains with a prescribed level schedule, and a family of regular
//! Doeblin functions whose chains are not weakly mixing.

pub mod chain;
pub mod coupling;
pub mod doeblin_fn;
pub mod error;
pub mod nonmixing;
pub mod replicas;
pub mod rng;
pub mod sequence;
pub mod transfer;

pub use error::{Error, Result};
