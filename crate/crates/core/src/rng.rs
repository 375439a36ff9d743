//! Seeded generators with keyed substreams.
//!
//! Every stochastic routine derives its generator from a base seed and a
//! key (site index, replicate index, ...) so that results do not depend on
//! evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub(crate) fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Generator for substream `key` of `seed`.
pub fn substream(seed: u64, key: u64) -> Rng {
    Rng::seed_from_u64(mix64(seed ^ mix64(key.wrapping_add(0xA5A5_A5A5))))
}

/// Stable 64-bit hash of a string (FNV-1a), used to key substreams by name.
pub(crate) fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
