//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit generator. Parallel work derives an
//! independent ChaCha substream per task from `(seed, a, b)` so results do not depend
//! on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used everywhere in the crate.
pub type Rng = ChaCha8Rng;

/// Generator for a plain seed.
pub fn from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent substream for task `(a, b)` under `seed`.
pub fn substream(seed: u64, a: u32, b: u32) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(((a as u64) << 32) | b as u64);
    r
}
