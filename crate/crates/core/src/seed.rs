//! Stable seed derivation.

use sha2::{Digest, Sha256};

/// Derives a child seed from a parent seed and a label. The derivation is
/// SHA-256 over the little-endian seed bytes followed by the label bytes,
/// truncated to the first 8 bytes.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}
