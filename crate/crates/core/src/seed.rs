//! Deterministic seed derivation.
//!
//! Every random stream in a run is keyed by a tuple of integers and derived
//! with a SplitMix64 finaliser, so streams are reproducible and independent
//! of evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Role tags for episode seeds.
pub const ROLE_TRAIN: u64 = 1;
pub const ROLE_VALIDATE: u64 = 2;
pub const ROLE_EVALUATE: u64 = 3;
pub const ROLE_SCHEDULE: u64 = 4;
pub const ROLE_OPTIMIZER: u64 = 5;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes an ordered tuple of integers into one seed.
pub fn derive(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// A portable random stream for the given key.
pub fn stream(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(parts))
}
