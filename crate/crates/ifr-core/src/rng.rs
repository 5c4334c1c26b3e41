//! Deterministic random number streams.
//!
//! All Monte Carlo in this crate draws from ChaCha8 streams keyed by
//! (seed, stream index). Because the generator is counter based, a grid
//! point / replicate / dataset gets an independent substream whose output
//! does not depend on evaluation order, so parallel runs are bit-identical
//! to sequential ones.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// An independent substream for (seed, stream).
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stable 64-bit FNV-1a hash, used to derive per-dataset seeds from names.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325_u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
