//! Dataset container: JSON header + fixed-width little-endian chunk records.
//!
//! Layout on disk:
//!
//! ```text
//! bytes 0..4    magic "APCD"
//! bytes 4..8    u32 LE header length H
//! bytes 8..8+H  UTF-8 JSON header
//! rest          chunk_count records, each:
//!                 u32 LE valid_len
//!                 CHUNK_LEN x state_dim  f64 LE (states, row-major)
//!                 CHUNK_LEN x action_dim f64 LE (executed actions)
//!                 CHUNK_LEN x action_dim f64 LE (expert means)
//! ```
//!
//! Decoding is a total function over arbitrary bytes: every length and
//! declared dimension is validated before use, failures are `Error::Format`.

use super::{Chunk, DatasetSpec, ExpertDataset, CHUNK_LEN};
use crate::numcore::Matrix;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

const MAGIC: &[u8; 4] = b"APCD";
const FORMAT_VERSION: u32 = 1;
const MAX_HEADER_LEN: usize = 16 * 1024 * 1024;
/// Generous cap on declared vector widths; real desk environments are tiny.
const MAX_DIM: u64 = 4096;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    spec: DatasetSpec,
    env_id: String,
    state_dim: u64,
    action_dim: u64,
    chunk_count: u64,
    trajectory_returns: Vec<f64>,
}

pub fn dataset_to_bytes(ds: &ExpertDataset) -> Vec<u8> {
    let header = Header {
        version: FORMAT_VERSION,
        spec: ds.spec.clone(),
        env_id: ds.env_id.clone(),
        state_dim: ds.state_dim as u64,
        action_dim: ds.action_dim as u64,
        chunk_count: ds.chunks.len() as u64,
        trajectory_returns: ds.trajectory_returns.clone(),
    };
    let header_bytes = serde_json::to_vec(&header).expect("header serialization cannot fail");
    let record = record_len(ds.state_dim, ds.action_dim);
    let mut out = Vec::with_capacity(8 + header_bytes.len() + record * ds.chunks.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for chunk in &ds.chunks {
        out.extend_from_slice(&(chunk.valid_len as u32).to_le_bytes());
        for m in [&chunk.states, &chunk.actions, &chunk.means] {
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

fn record_len(state_dim: usize, action_dim: usize) -> usize {
    4 + 8 * CHUNK_LEN * (state_dim + 2 * action_dim)
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<ExpertDataset> {
    if bytes.len() < 8 {
        return Err(Error::Format("dataset shorter than fixed header".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format("bad dataset magic".into()));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if header_len > MAX_HEADER_LEN {
        return Err(Error::Format(format!("header length {header_len} too large")));
    }
    let body_start = 8usize
        .checked_add(header_len)
        .ok_or_else(|| Error::Format("header length overflow".into()))?;
    if bytes.len() < body_start {
        return Err(Error::Format("truncated dataset header".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[8..body_start])
        .map_err(|e| Error::Format(format!("header json: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset version {}",
            header.version
        )));
    }
    header
        .spec
        .validate()
        .map_err(|e| Error::Format(format!("dataset spec invalid: {e}")))?;
    if header.state_dim == 0
        || header.action_dim == 0
        || header.state_dim > MAX_DIM
        || header.action_dim > MAX_DIM
    {
        return Err(Error::Format(format!(
            "implausible dims state={} action={}",
            header.state_dim, header.action_dim
        )));
    }
    if header.trajectory_returns.len() != header.spec.n_trajectories {
        return Err(Error::Format(format!(
            "{} trajectory returns for {} trajectories",
            header.trajectory_returns.len(),
            header.spec.n_trajectories
        )));
    }
    let state_dim = header.state_dim as usize;
    let action_dim = header.action_dim as usize;
    let record = record_len(state_dim, action_dim) as u128;
    let body = &bytes[body_start..];
    let expected = record
        .checked_mul(header.chunk_count as u128)
        .ok_or_else(|| Error::Format("chunk payload overflow".into()))?;
    if body.len() as u128 != expected {
        return Err(Error::Format(format!(
            "chunk payload is {} bytes, {} chunks need {expected}",
            body.len(),
            header.chunk_count
        )));
    }
    let mut chunks = Vec::with_capacity(header.chunk_count as usize);
    let mut off = 0usize;
    let rec = record as usize;
    for _ in 0..header.chunk_count {
        let slab = &body[off..off + rec];
        off += rec;
        let valid_len = u32::from_le_bytes(slab[0..4].try_into().unwrap()) as usize;
        if valid_len == 0 || valid_len > CHUNK_LEN {
            return Err(Error::Format(format!("chunk valid_len {valid_len} out of range")));
        }
        let mut floats = slab[4..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut take = |rows: usize, cols: usize| -> Matrix {
            let data: Vec<f64> = floats.by_ref().take(rows * cols).collect();
            Matrix::from_vec(rows, cols, data)
        };
        chunks.push(Chunk {
            states: take(CHUNK_LEN, state_dim),
            actions: take(CHUNK_LEN, action_dim),
            means: take(CHUNK_LEN, action_dim),
            valid_len,
        });
    }
    Ok(ExpertDataset {
        spec: header.spec,
        env_id: header.env_id,
        state_dim,
        action_dim,
        chunks,
        trajectory_returns: header.trajectory_returns,
    })
}
