//! Deterministic seed-stream derivation.
//!
//! Every stochastic routine in the crate draws from a ChaCha stream whose
//! seed is derived from a root seed and one or more stream tags. Derived
//! streams are fixed by `(root, tags)` alone, so parallel execution order
//! never changes results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finaliser; decorrelates nearby tag values.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `root` and a stream `tag`.
pub fn derive(root: u64, tag: u64) -> u64 {
    mix64(root ^ mix64(tag))
}

/// Derives a child seed from `root` and two stream tags (e.g. iteration
/// and component index).
pub fn derive2(root: u64, tag_a: u64, tag_b: u64) -> u64 {
    derive(derive(root, tag_a), tag_b)
}

/// Builds a reproducible generator for the given seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags used by the fitting and bootstrap loops. Values are
/// arbitrary but fixed; changing them changes every seeded result.
pub mod tags {
    pub const BATCH: u64 = 0x01;
    pub const ENTROPY: u64 = 0x02;
    pub const INIT: u64 = 0x03;
    pub const RESAMPLE: u64 = 0x04;
    pub const REFIT: u64 = 0x05;
    pub const GENERATE: u64 = 0x06;
    pub const CELL: u64 = 0x07;
    pub const BASELINE: u64 = 0x08;
    pub const OUTSIDE_MASS: u64 = 0x09;
    pub const MEANSHIFT_INIT: u64 = 0x0a;
    pub const BOOT_CI: u64 = 0x0b;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_deterministic_and_tag_sensitive() {
        assert_eq!(derive(7, 1), derive(7, 1));
        assert_ne!(derive(7, 1), derive(7, 2));
        assert_ne!(derive(7, 1), derive(8, 1));
        assert_ne!(derive2(7, 1, 2), derive2(7, 2, 1));
    }
}
