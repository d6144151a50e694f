//! Seed derivation.
//!
//! A master seed is split into independent per-module streams by hashing
//! `(master, label)` with SplitMix64, so adding a new consumer never shifts
//! the random numbers seen by existing ones. Data-parallel kernels derive one
//! generator per fixed-size chunk from `(base, counter, chunk)`, which keeps
//! results independent of the worker-thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn label_hash(label: &str) -> u64 {
    // FNV-1a, stable across platforms and releases.
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3))
}

/// Seed for the stream named `label` under `master`.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    splitmix64(splitmix64(master) ^ label_hash(label))
}

/// Generator for the stream named `label` under `master`.
pub fn stream_rng(master: u64, label: &str) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, label))
}

/// Generator for chunk `chunk` of parallel step `counter`.
#[inline]
pub fn chunk_rng(base: u64, counter: u64, chunk: u64) -> SimRng {
    SimRng::seed_from_u64(splitmix64(base ^ splitmix64(counter ^ splitmix64(chunk.wrapping_add(0x51)))))
}
