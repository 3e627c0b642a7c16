//! Seed derivation.
//!
//! Every stochastic stage receives its own RNG stream derived from the user
//! seed and a fixed stage tag, so adding draws to one stage never shifts the
//! draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StageRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a, stable across platforms and releases.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    mix64(seed ^ fnv1a64(tag.as_bytes()))
}

pub fn derive_indexed(seed: u64, tag: &str, index: u64) -> u64 {
    mix64(derive_seed(seed, tag) ^ mix64(index))
}

pub fn stage_rng(seed: u64, tag: &str) -> StageRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag))
}
