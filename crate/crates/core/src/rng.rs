//! Reproducible random streams.
//!
//! All randomness comes from ChaCha8 keyed by a 64-bit seed. The counter-based
//! design lets independent consumers share a seed and still draw disjoint
//! sequences by selecting a different stream id.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids used by the solver and the generators.
pub mod stream {
    pub const OBJECTIVE: u64 = 1;
    pub const CONSTRAINT: u64 = 2;
    pub const GENERATOR: u64 = 3;
    pub const TEST: u64 = 4;
}

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
