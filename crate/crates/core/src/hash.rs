//! Content hashing used for medium identifiers, cache keys and manifests.

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_bytes(bytes: &[u8]) -> [u8; 32] {
    let mut out = [0u8; 32];
    out.copy_from_slice(&Sha256::digest(bytes));
    out
}

/// Hash of the canonical JSON encoding of `value`.
///
/// Struct fields serialize in declaration order and maps used here are
/// `BTreeMap`s, so the encoding is canonical for our types.
pub fn content_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable value");
    sha256_hex(&bytes)
}
