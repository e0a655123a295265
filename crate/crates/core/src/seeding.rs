//! Stable seed derivation. Sub-seeds are the leading bytes of a SHA-256
//! digest over the parent seed and a list of labelled parts, so they do not
//! depend on platform, hasher state, or iteration order.

use sha2::{Digest, Sha256};

pub fn derive_seed(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Seed for one position in a stream of independent draws.
pub fn stream_seed(seed: u64, index: u64) -> u64 {
    derive_seed(seed, &[b"stream", &index.to_le_bytes()])
}
