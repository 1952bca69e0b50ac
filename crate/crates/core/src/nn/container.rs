//! Binary container shared by checkpoints and embedding files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes  "LOCL"
//! version    u32
//! manifest   u64 byte length, then UTF-8 JSON
//! payload    f64 values of every array listed in the manifest, in order
//! ```
//!
//! The manifest is `{"kind": ..., "arrays": [{"name", "shape"}], "meta": ...}`.
//! Readers validate that the payload length matches the declared shapes.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{LoclError, Result};

pub const MAGIC: &[u8; 4] = b"LOCL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ArrayEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest<M> {
    kind: String,
    arrays: Vec<ArrayEntry>,
    meta: M,
}

pub struct Container<M> {
    pub kind: String,
    pub meta: M,
    pub arrays: Vec<(ArrayEntry, Vec<f64>)>,
}

pub fn write_container<W: Write, M: Serialize>(
    mut w: W,
    kind: &str,
    meta: &M,
    arrays: &[(ArrayEntry, &[f64])],
) -> Result<()> {
    for (entry, data) in arrays {
        if entry.len() != data.len() {
            return Err(LoclError::Checkpoint(format!(
                "array {} declares {} values, has {}",
                entry.name,
                entry.len(),
                data.len()
            )));
        }
    }
    let manifest = Manifest {
        kind: kind.to_owned(),
        arrays: arrays.iter().map(|(e, _)| e.clone()).collect(),
        meta,
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut buf = Vec::with_capacity(16 + json.len() + 8 * arrays.iter().map(|a| a.1.len()).sum::<usize>());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, data) in arrays {
        for v in *data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)
        .map_err(|e| LoclError::Checkpoint(format!("write failed: {e}")))
}

pub fn read_container<R: Read, M: DeserializeOwned>(mut r: R, expected_kind: &str) -> Result<Container<M>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| LoclError::Checkpoint(format!("read failed: {e}")))?;
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(LoclError::Checkpoint("missing LOCL magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(LoclError::Checkpoint(format!(
            "unsupported format version {version}"
        )));
    }
    let mlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if body.len() < mlen {
        return Err(LoclError::Checkpoint("truncated manifest".into()));
    }
    let manifest: Manifest<M> = serde_json::from_slice(&body[..mlen])?;
    if manifest.kind != expected_kind {
        return Err(LoclError::Checkpoint(format!(
            "expected a {expected_kind} container, found {}",
            manifest.kind
        )));
    }
    let payload = &body[mlen..];
    let total: usize = manifest.arrays.iter().map(ArrayEntry::len).sum();
    if payload.len() != total * 8 {
        return Err(LoclError::Checkpoint(format!(
            "payload holds {} bytes, manifest declares {} values",
            payload.len(),
            total
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let arrays = manifest
        .arrays
        .into_iter()
        .map(|e| {
            let data: Vec<f64> = values.by_ref().take(e.len()).collect();
            (e, data)
        })
        .collect();
    Ok(Container {
        kind: manifest.kind,
        meta: manifest.meta,
        arrays,
    })
}
