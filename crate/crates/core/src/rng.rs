//! Seeded randomness. All sampling goes through ChaCha8 seeded from a
//! 64-bit value, with sub-streams derived by SplitMix64 mixing so results
//! do not depend on platform or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type EngineRng = ChaCha8Rng;

/// One SplitMix64 output step for state `x`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of sub-stream `stream` under `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(base) ^ stream)
}

pub fn rng_from_seed(seed: u64) -> EngineRng {
    ChaCha8Rng::seed_from_u64(seed)
}
