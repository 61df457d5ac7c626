//! Deterministic seed derivation.
//!
//! Every stochastic stage owns a ChaCha8 stream. Sub-seeds are derived from
//! a master seed with a counter-based SplitMix64 step:
//! `derive(master, stream) = splitmix64(master + (stream + 1) * 0x9E3779B97F4A7C15)`.
//! Stages can therefore be re-run in isolation without replaying earlier
//! stages.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of sub-stream `stream` from `master`.
pub fn derive(master: u64, stream: u64) -> u64 {
    splitmix64(master.wrapping_add(stream.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Portable, reproducible generator for one stage.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
