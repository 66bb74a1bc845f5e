//! Binary container for named f64 tensors, used by checkpoints and feature
//! dumps.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! bytes 0..4    magic "SFTC"
//! bytes 4..8    u32 format version (currently 1)
//! bytes 8..16   u64 JSON header length H
//! bytes 16..16+H  UTF-8 JSON header
//! remainder     concatenated tensor payloads, f64 little-endian
//! ```
//!
//! The header is `{"kind": …, "meta": …, "tensors": [{"name", "shape",
//! "offset", "len"}, …]}` where `offset` counts bytes into the payload
//! section and `len` counts elements. Payload bytes reproduce `f64` bit
//! patterns exactly, so a write/read cycle is lossless.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;

const MAGIC: &[u8; 4] = b"SFTC";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    len: u64,
}

/// Parsed container contents.
#[derive(Debug)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    /// Tensors in file order.
    pub tensors: Vec<(String, ArrayD<f64>)>,
}

impl Container {
    pub fn tensor_map(self) -> HashMap<String, ArrayD<f64>> {
        self.tensors.into_iter().collect()
    }

    pub fn get(&self, name: &str) -> Option<&ArrayD<f64>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }
}

pub fn write_container(
    path: &Path,
    kind: &str,
    meta: serde_json::Value,
    tensors: &[(String, ArrayD<f64>)],
) -> Result<()> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for (name, arr) in tensors {
        entries.push(TensorEntry {
            name: name.clone(),
            shape: arr.shape().to_vec(),
            offset,
            len: arr.len() as u64,
        });
        offset += (arr.len() * 8) as u64;
    }
    let header = Header { kind: kind.to_string(), meta, tensors: entries };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::Internal(format!("container header encode: {e}")))?;
    let mut bytes =
        Vec::with_capacity(16 + header_json.len() + offset as usize);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for (_, arr) in tensors {
        // standard (row-major) iteration order
        for &v in arr.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fsutil::write_atomic(path, &bytes)
}

pub fn read_container(path: &Path) -> Result<Container> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[0..4] != MAGIC {
        return Err(Error::Input(format!("{} is not a tensor container", path.display())));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Input(format!(
            "{}: unsupported container version {version} (expected {VERSION})",
            path.display()
        )));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() < 16 + hlen {
        return Err(Error::Input(format!("{}: truncated header", path.display())));
    }
    let header: Header = serde_json::from_slice(&bytes[16..16 + hlen])
        .map_err(|e| Error::Input(format!("{}: bad container header: {e}", path.display())))?;
    let payload = &bytes[16 + hlen..];
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        let start = entry.offset as usize;
        let nbytes = entry.len as usize * 8;
        if payload.len() < start + nbytes {
            return Err(Error::Input(format!(
                "{}: tensor '{}' extends past the payload",
                path.display(),
                entry.name
            )));
        }
        let mut data = Vec::with_capacity(entry.len as usize);
        for chunk in payload[start..start + nbytes].chunks_exact(8) {
            data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        let expected: usize = entry.shape.iter().product();
        if expected != data.len() {
            return Err(Error::Input(format!(
                "{}: tensor '{}' shape/len mismatch",
                path.display(),
                entry.name
            )));
        }
        let arr = ArrayD::from_shape_vec(IxDyn(&entry.shape), data)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        tensors.push((entry.name.clone(), arr));
    }
    Ok(Container { kind: header.kind, meta: header.meta, tensors })
}
