//! Root-seed splitting.
//!
//! Every random stream is derived from the run's root seed and a label:
//! the first eight bytes (little-endian) of `SHA-256(root_le || label)`.
//! Indexed streams append `"#" || index` to the label.

use sha2::{Digest, Sha256};

pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn derive_indexed(root: u64, label: &str, index: u64) -> u64 {
    derive_seed(root, &format!("{label}#{index}"))
}
