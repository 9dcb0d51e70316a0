//! Seeded random streams.
//!
//! Every stochastic component takes a [`SimRng`] explicitly. Sub-streams are
//! derived deterministically from a parent seed and a list of tags so that
//! results do not depend on evaluation order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `base` with `tags` into a fresh 64-bit seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// Independent stream `stream` of the generator seeded with `base`.
pub fn stream(base: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(base);
    rng.set_stream(stream);
    rng
}

/// Draws a seed for a child stream from `rng`.
pub fn fork_seed(rng: &mut SimRng) -> u64 {
    rng.next_u64()
}
