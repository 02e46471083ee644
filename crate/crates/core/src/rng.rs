//! Named random sub-streams derived from a single seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const STREAM_SYNTH: &str = "synth";
pub const STREAM_INIT: &str = "init";
pub const STREAM_SAMPLING: &str = "sampling";

/// Generator for `stream` under `seed`. Distinct stream names give
/// independent sequences for the same seed.
pub fn stream_rng(seed: u64, stream: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(stream.as_bytes()));
    rng
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
