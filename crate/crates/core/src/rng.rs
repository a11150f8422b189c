//! Seeded random streams. Every random draw in the crate goes through a
//! ChaCha stream derived from an explicit seed, so runs are reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream for a (seed, purpose, index) triple.
pub fn derived(seed: u64, purpose: u64, index: u64) -> Rng {
    seeded(mix(mix(seed ^ mix(purpose)) ^ index))
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
