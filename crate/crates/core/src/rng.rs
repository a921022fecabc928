//! Seeded random streams.
//!
//! Every stochastic component draws from ChaCha8 seeded with `seed_from_u64(seed)`.
//! Independent consumers sharing one seed are separated by the ChaCha stream id.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const RNG_ALGORITHM: &str = "ChaCha8Rng/seed_from_u64";

pub const STREAM_GENERATOR: u64 = 0;
pub const STREAM_SAMPLER: u64 = 1;

pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
