//! Stable per-job seeding.
//!
//! Every job seed is `mix(mix(mix(master) ^ a) ^ b)` where `mix` is the
//! SplitMix64 finalizer. Jobs therefore draw from independent streams that
//! depend only on their coordinates, never on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used for every randomized operation in this crate.
pub type JobRng = ChaCha8Rng;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for job `(a, b)` under `master`, e.g. (category, output index).
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    mix64(mix64(mix64(master) ^ a) ^ b)
}

pub fn rng_from_seed(seed: u64) -> JobRng {
    ChaCha8Rng::seed_from_u64(seed)
}
