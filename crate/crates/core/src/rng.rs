//! Deterministic random-stream derivation.
//!
//! Every random draw in a run comes from a stream keyed by
//! `(master seed, agent, step, purpose)`. Streams are independent of the
//! order in which they are created, so per-agent work can run in parallel
//! without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Part of the derivation key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Compress = 2,
    Gradient = 3,
    Noise = 4,
    Attack = 5,
    Certify = 6,
    Partition = 7,
    Estimate = 8,
    Dataset = 9,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes the key into a single 64-bit seed.
pub fn derive_seed(seed: u64, agent: u64, step: u64, purpose: Purpose) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ agent.wrapping_mul(0xd6e8_feb8_6659_fd93));
    h = splitmix64(h ^ step.wrapping_mul(0xa076_1d64_78bd_642f));
    splitmix64(h ^ (purpose as u64).wrapping_mul(0xe703_7ed1_a0b4_28db))
}

/// Stream for one `(seed, agent, step, purpose)` key.
pub fn stream(seed: u64, agent: usize, step: usize, purpose: Purpose) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, agent as u64, step as u64, purpose))
}

/// Master seed plus the derivation rule, passed to the step functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    pub seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn get(&self, agent: usize, step: usize, purpose: Purpose) -> ChaCha8Rng {
        stream(self.seed, agent, step, purpose)
    }
}
