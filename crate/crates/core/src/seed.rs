//! Deterministic sub-seeding.
//!
//! Every random component draws from its own ChaCha stream derived from one
//! master seed, so enabling or disabling a phase never shifts the random
//! numbers another phase sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named random streams. The discriminant is the ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Walks = 1,
    Pairs = 2,
    Negatives = 3,
    InitTarget = 4,
    InitContext = 5,
    InitDiscriminator = 6,
    InitDecoder = 7,
    Prior = 8,
    AdversarialRows = 9,
    Corruption = 10,
    Split = 11,
    Probe = 12,
}

/// Returns the generator for `stream` under `seed`.
pub fn rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream as u64);
    r
}

/// Generator for an indexed sub-task (a repetition, a shard, a sweep point).
pub fn rng_indexed(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mixed = splitmix(seed ^ splitmix(index.wrapping_add(0x9e37_79b9)));
    rng(mixed, stream)
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
