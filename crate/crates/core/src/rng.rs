//! Seed handling.
//!
//! Everything random in this crate draws from ChaCha8, seeded from a 64-bit
//! value. Sub-streams (one per generated sample, per training restart, ...)
//! reuse the same key with a distinct ChaCha stream id, so runs are
//! reproducible across platforms and independent of how many samples any
//! stage consumes.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG for the sub-stream `stream` of the master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// RNG for the master stream itself.
pub fn master_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
