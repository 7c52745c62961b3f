//! Named random streams derived from one global seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream names used by the pipelines.
pub const INIT: &str = "init";
pub const SAMPLER: &str = "sampler";
pub const TRAINER: &str = "trainer";
pub const TTT: &str = "ttt";

/// FNV-1a, so stream ids are stable across platforms and releases.
fn stream_id(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Independent ChaCha stream for component `name` under `seed`.
pub fn stream(seed: u64, name: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(name));
    rng
}

/// Deterministic sub-seed, for components that take a `u64` seed.
pub fn sub_seed(seed: u64, name: &str) -> u64 {
    use rand::RngCore;
    stream(seed, name).next_u64()
}
