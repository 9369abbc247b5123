//! Domain-separated seed derivation.
//!
//! Every pseudo-random object in the protocol (the common polynomial `a`,
//! pairwise secrets, per-round masks, per-user training streams) comes from
//! a ChaCha20 stream keyed by a SHA-256 digest of a parent seed, a label and
//! a list of integer coordinates.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub type Seed = [u8; 32];

/// Expands a 64-bit user-facing seed into a full PRF key.
pub fn seed_from_u64(seed: u64) -> Seed {
    derive(&[0u8; 32], "root", &[seed])
}

pub fn derive(parent: &Seed, label: &str, coords: &[u64]) -> Seed {
    let mut hasher = Sha256::new();
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(parent);
    for c in coords {
        hasher.update(c.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut out = [0u8; 32];
    out.copy_from_slice(&digest);
    out
}

pub fn stream(seed: &Seed) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(*seed)
}
