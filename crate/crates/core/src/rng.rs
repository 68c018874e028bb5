//! Seed derivation for reproducible parallel streams.
//!
//! Every random stream is a ChaCha8 generator keyed by a 64-bit seed and
//! positioned on an explicit stream id, so replicate `r` of a study draws the
//! same numbers no matter which thread evaluates it.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Generator for stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw on the open interval (0, 1), on a 2^-52 grid.
pub fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}
