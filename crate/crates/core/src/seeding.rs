//! Deterministic derivation of independent random substreams.
//!
//! Every source of randomness in the toolkit (field draws, feature noise,
//! fold shuffles, bootstrap resampling, per-tree feature subsampling) is a
//! ChaCha stream whose seed is derived from an explicit base seed plus a
//! list of integer tags. Parallel workers derive their own substreams, so
//! results are independent of scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; good avalanche for seed mixing.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed and a path of tags.
pub fn derive(base: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(base ^ 0xA076_1D64_78BD_642F);
    for &tag in tags {
        state = splitmix64(state ^ splitmix64(tag.wrapping_add(0x1234_5678_9ABC_DEF0)));
    }
    state
}

/// A seeded generator for the substream identified by `(base, tags)`.
pub fn rng(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, tags))
}
