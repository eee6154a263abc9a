//! Deterministic seed derivation.
//!
//! Streams are keyed hierarchically: run streams from the master seed, then
//! per-iteration generator and erasure streams from the run stream. Keeping
//! code randomness and failure randomness on separate streams matches the
//! independence the convergence analysis assumes, and makes every estimator
//! reproducible regardless of evaluation order.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a child key.
pub fn mix(parent: u64, child: u64) -> u64 {
    splitmix64(parent ^ splitmix64(child ^ 0x5851_F42D_4C95_7F2D))
}

/// Stable label hash (FNV-1a) for domain-separating streams.
pub fn tag(label: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in label.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A fresh ChaCha stream for the given derived seed.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
