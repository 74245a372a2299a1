//! Deterministic random streams.
//!
//! Every sample drawn inside an iteration gets its own ChaCha stream keyed by
//! `(seed, iteration, index)`, so results do not depend on evaluation order or
//! thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep independent consumers of one seed apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    ReducedSet = 1,
    Optimizer = 2,
    StaticSamples = 3,
    DynamicSamples = 4,
    Placement = 5,
    Subset = 6,
    Validation = 7,
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a list of keys.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(mix(seed), |acc, &k| mix(acc ^ mix(k)))
}

/// RNG for draw `index` of `iteration` within a tagged stream.
pub fn stream_rng(seed: u64, stream: Stream, iteration: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[stream as u64, iteration]));
    rng.set_stream(index);
    rng
}
