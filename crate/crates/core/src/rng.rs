//! Keyed, counter-based random streams.
//!
//! Every random draw in the library comes from a ChaCha20 stream keyed by
//! `(seed, purpose tag)` and selected by a 64-bit stream id. Two runs with the
//! same seed see the same numbers regardless of how replicas are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Name of the generator, echoed into run manifests.
pub const GENERATOR: &str = "chacha20";

/// Root of all randomness for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngKey {
    seed: u64,
}

impl RngKey {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The generator for `(purpose, stream)`.
    pub fn stream(&self, purpose: &str, stream: u64) -> ChaCha20Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&fnv1a(purpose.as_bytes()).to_le_bytes());
        key[16..24].copy_from_slice(&mix64(self.seed ^ 0x9E37_79B9_7F4A_7C15).to_le_bytes());
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(stream);
        rng
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
