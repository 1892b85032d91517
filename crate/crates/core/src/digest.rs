//! Content and configuration fingerprints recorded in manifests and
//! trajectory files.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Short stable fingerprint of a serializable configuration.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_vec(config).expect("configuration serializes to JSON");
    sha256_hex(&json)[..16].to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(config_hash(&(1, "x")), config_hash(&(1, "x")));
        assert_ne!(config_hash(&(1, "x")), config_hash(&(2, "x")));
    }
}
