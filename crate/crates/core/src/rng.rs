//! Seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded from a
//! 64-bit value obtained by folding identifiers into the global seed with the
//! SplitMix64 finalizer:
//!
//! ```text
//! mix64(z):  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9
//!            z = (z ^ (z >> 27)) * 0x94d049bb133111eb
//!            z ^ (z >> 31)
//! derive(seed, [a, b, ...]) = fold: h = mix64(h ^ mix64(x + 0x9e3779b97f4a7c15))
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(mix64(seed), |h, &x| mix64(h ^ mix64(x.wrapping_add(GOLDEN))))
}

pub fn stream(seed: u64, parts: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive(seed, parts))
}

// Domain tags, so that e.g. the init stream for layer 3 never collides with
// the shuffle stream for worker 3.
pub(crate) const TAG_INIT: u64 = 1;
pub(crate) const TAG_SHARD: u64 = 2;
pub(crate) const TAG_WORKER: u64 = 3;
pub(crate) const TAG_EPOCH: u64 = 4;
pub(crate) const TAG_SYNTH: u64 = 5;

/// Seed of worker `worker`'s batch stream for a run with global seed `seed`.
pub fn worker_seed(seed: u64, worker: usize) -> u64 {
    derive(seed, &[TAG_WORKER, worker as u64])
}
