//! Checkpoint container: JSON header + flat little-endian f64 parameters.
//!
//! Layout on disk:
//!
//! ```text
//! bytes 0..4    magic "APCK"
//! bytes 4..8    u32 LE header length H
//! bytes 8..8+H  UTF-8 JSON header
//! rest          param_count x f64 little-endian
//! ```
//!
//! The header always carries `version`, a `kind` discriminator, and a
//! kind-specific `meta` object (for plain MLPs: the [`MlpSpec`]). Decoding
//! is hardened against arbitrary bytes: every length is validated before
//! use and all failures are `Error::Format`, never a panic.

use super::mlp::{MlpParams, MlpSpec};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

const MAGIC: &[u8; 4] = b"APCK";
const FORMAT_VERSION: u32 = 1;
/// Upper bound on the JSON header; anything larger is corrupt.
const MAX_HEADER_LEN: usize = 16 * 1024 * 1024;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    kind: String,
    param_count: u64,
    meta: serde_json::Value,
}

/// A decoded checkpoint, still generic over `kind`.
#[derive(Clone, Debug)]
pub struct Decoded {
    pub kind: String,
    pub meta: serde_json::Value,
    pub params: Vec<f64>,
}

/// Serialize a checkpoint of the given kind.
pub fn encode(kind: &str, meta: &serde_json::Value, params: &[f64]) -> Vec<u8> {
    let header = Header {
        version: FORMAT_VERSION,
        kind: kind.to_string(),
        param_count: params.len() as u64,
        meta: meta.clone(),
    };
    let header_bytes = serde_json::to_vec(&header).expect("header serialization cannot fail");
    let mut out = Vec::with_capacity(8 + header_bytes.len() + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

/// Decode a checkpoint from raw bytes. Total function over arbitrary input:
/// malformed bytes produce `Error::Format`.
pub fn decode(bytes: &[u8]) -> Result<Decoded> {
    if bytes.len() < 8 {
        return Err(Error::Format("checkpoint shorter than fixed header".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if header_len > MAX_HEADER_LEN {
        return Err(Error::Format(format!("header length {header_len} too large")));
    }
    let body_start = 8usize
        .checked_add(header_len)
        .ok_or_else(|| Error::Format("header length overflow".into()))?;
    if bytes.len() < body_start {
        return Err(Error::Format("truncated checkpoint header".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[8..body_start])
        .map_err(|e| Error::Format(format!("header json: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {}",
            header.version
        )));
    }
    let body = &bytes[body_start..];
    if body.len() % 8 != 0 {
        return Err(Error::Format("parameter body not a multiple of 8 bytes".into()));
    }
    let n = body.len() / 8;
    if header.param_count != n as u64 {
        return Err(Error::Format(format!(
            "declared {} parameters, body holds {n}",
            header.param_count
        )));
    }
    let params = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Decoded {
        kind: header.kind,
        meta: header.meta,
        params,
    })
}

/// Encode a plain MLP checkpoint (`kind = "mlp"`, meta = spec).
pub fn encode_mlp(spec: &MlpSpec, params: &MlpParams) -> Vec<u8> {
    let meta = serde_json::to_value(spec).expect("spec serialization cannot fail");
    encode("mlp", &meta, &params.flatten())
}

/// Decode a plain MLP checkpoint; validates spec sanity and parameter count.
pub fn decode_mlp(bytes: &[u8]) -> Result<(MlpSpec, MlpParams)> {
    let d = decode(bytes)?;
    if d.kind != "mlp" {
        return Err(Error::Format(format!("expected kind \"mlp\", got {:?}", d.kind)));
    }
    let spec: MlpSpec =
        serde_json::from_value(d.meta).map_err(|e| Error::Format(format!("mlp spec: {e}")))?;
    spec.validate()
        .map_err(|e| Error::Format(format!("mlp spec invalid: {e}")))?;
    if d.params.len() != spec.param_count() {
        return Err(Error::Format(format!(
            "spec wants {} parameters, checkpoint holds {}",
            spec.param_count(),
            d.params.len()
        )));
    }
    let params = MlpParams::from_flat(&spec, &d.params)
        .map_err(|e| Error::Format(format!("unflatten: {e}")))?;
    Ok((spec, params))
}

pub fn save_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_file(path: &Path) -> Result<Vec<u8>> {
    Ok(std::fs::read(path)?)
}
