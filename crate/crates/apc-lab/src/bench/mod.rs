//! Experiment orchestration: the evaluation protocol, binning statistics,
//! experiment configuration, sweep runner, and report emission.

pub mod config;
pub mod eval;
pub mod report;
pub mod runner;

use sha2::{Digest, Sha256};

/// Canonical JSON text for hashing: `serde_json` (without `preserve_order`)
/// serializes object keys sorted, so `to_string` is already canonical.
pub fn canonical_json(value: &serde_json::Value) -> String {
    serde_json::to_string(value).expect("JSON value serialization cannot fail")
}

/// Hex SHA-256 of the canonical JSON encoding of `value`. Stable across runs
/// and key-order-insensitive; used for config and environment hashes.
pub fn json_hash(value: &serde_json::Value) -> String {
    let mut h = Sha256::new();
    h.update(canonical_json(value).as_bytes());
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
