//! Deterministic, splittable random streams.
//!
//! A stream is a ChaCha8 generator whose key is the SHA-256 digest of the
//! run seed and a stream label. There is no global generator: every
//! randomized operation forks its own stream, and per-item work (one
//! simulation trial, one dropout pass) selects a ChaCha stream index so that
//! results do not depend on execution order or thread count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha8Rng;

fn key(seed: u64, label: &str) -> [u8; 32] {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(label.as_bytes())
        .finalize();
    let mut out = [0u8; 32];
    out.copy_from_slice(&digest);
    out
}

/// Stream keyed by `(seed, label)`.
pub fn fork(seed: u64, label: &str) -> Stream {
    Stream::from_seed(key(seed, label))
}

/// Sub-stream `index` of the `(seed, label)` stream.
pub fn fork_indexed(seed: u64, label: &str, index: u64) -> Stream {
    let mut rng = fork(seed, label);
    rng.set_stream(index);
    rng
}

/// A 64-bit seed derived from `(seed, label, index)`, for APIs that take a
/// plain seed rather than a stream.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    fork_indexed(seed, label, index).next_u64()
}
