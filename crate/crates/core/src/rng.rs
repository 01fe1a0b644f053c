//! Seed streams.
//!
//! Every randomized routine takes a root `u64` seed. Independent pieces of
//! work (trials, restarts, auxiliary draws such as loops) get their own
//! ChaCha8 stream: the generator is keyed by the root seed and the 64-bit
//! stream id selects a disjoint keystream, so a trial's draws never depend on
//! how many other trials ran before it or on which thread ran it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids used inside a single sampling call.
pub(crate) mod streams {
    pub const MAIN: u64 = 0;
    pub const LOOPS: u64 = 1;
    pub const REALIZE: u64 = 2;
}

/// The generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed, e.g. the seed of trial `index` under a root seed.
///
/// SplitMix64 finalizer over `root ^ golden * (index + 1)`.
pub fn child_seed(root: u64, index: u64) -> u64 {
    let mut z = root ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
