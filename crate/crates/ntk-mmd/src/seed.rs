//! Seed derivation for independent RNG streams.
//!
//! Every stochastic component takes a root seed and derives per-task seeds
//! with [`child_seed`], which returns the `index`-th output of a SplitMix64
//! generator seeded at `root`. Streams are therefore indexed by task, not by
//! execution order: a Monte Carlo replica gets the same RNG whether replicas
//! run sequentially or in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The `index`-th output of SplitMix64 seeded at `root`.
pub fn child_seed(root: u64, index: u64) -> u64 {
    let mut z = root.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for stream `index` under `root`.
pub fn child_rng(root: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(root, index))
}

/// RNG seeded directly at `seed`.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
