//! Seed derivation. Every random stream in the toolkit comes from one root
//! seed split by a fixed label, so subsystems never share or perturb each
//! other's streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Deterministic generator for the stream `label` under `seed`.
pub fn stream(seed: u64, label: &str) -> Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}
