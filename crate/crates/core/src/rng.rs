//! Keyed random streams.
//!
//! Every stochastic quantity is drawn from a ChaCha stream whose seed is a
//! hash of `(seed, tag, indices...)`, so results never depend on how work
//! is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream families. Distinct tags keep unrelated draws independent even
/// when they share a user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamTag {
    Terminal = 1,
    HedgeOuter = 2,
    HedgeInner = 3,
    StrategyOuter = 4,
    StrategyInner = 5,
    Calibration = 6,
    Dominance = 7,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a 64-bit stream key from a seed, a family tag and indices.
pub fn stream_key(seed: u64, tag: StreamTag, indices: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(tag as u64));
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

pub fn stream(seed: u64, tag: StreamTag, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_key(seed, tag, indices))
}
