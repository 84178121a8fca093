//! Deterministic RNG streams.
//!
//! One master 64-bit seed; per-stage streams are derived by mixing the seed
//! with the stage name and a worker index, so parallel workers draw from
//! independent streams and results do not depend on thread scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over bytes, used only for stream derivation.
fn fnv1a(bytes: &[u8], mut hash: u64) -> u64 {
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Derive the RNG stream for `(seed, stage, worker)`.
pub fn stream(seed: u64, stage: &str, worker: u64) -> ChaCha8Rng {
    let mut h = fnv1a(stage.as_bytes(), 0xcbf29ce484222325);
    h = fnv1a(&worker.to_le_bytes(), h);
    h = fnv1a(&seed.to_le_bytes(), h);
    let mut key = [0u8; 32];
    let mut x = h;
    for chunk in key.chunks_mut(8) {
        x = splitmix(x);
        chunk.copy_from_slice(&x.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
