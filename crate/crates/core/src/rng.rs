//! Deterministic randomness.
//!
//! All streams descend from one top-level seed. Named substreams are derived
//! by hashing `(seed, label, index)` through splitmix64, and per-configuration
//! noise uses the same hash as a counter-based generator so that the value
//! attached to a configuration never depends on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based hash of `(seed, counter)`.
#[inline]
pub fn hash2(seed: u64, counter: u64) -> u64 {
    mix64(mix64(seed.wrapping_add(GOLDEN)) ^ counter.wrapping_add(1).wrapping_mul(GOLDEN))
}

/// Maps a 64-bit hash to the open interval (0, 1).
#[inline]
pub fn unit_open(h: u64) -> f64 {
    ((h >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Seed for the substream `label[index]` of `seed`.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    // FNV-1a over the label keeps distinct names apart
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash2(hash2(seed, h), index)
}

pub fn substream(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, label, index))
}
