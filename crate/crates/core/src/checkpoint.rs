//! Named-tensor container: `<stem>.bin` holds little-endian `f32` data for
//! every tensor back to back, `<stem>.json` lists names, shapes and offsets
//! plus free-form metadata.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in elements (not bytes) into the `.bin` file.
    pub offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    version: u32,
    bin: String,
    sha256: String,
    tensors: Vec<TensorEntry>,
    meta: Value,
}

fn encode(tensors: &[(&str, &Tensor)]) -> (Vec<u8>, Vec<TensorEntry>) {
    let mut bytes = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0;
    for (name, t) in tensors {
        entries.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset,
        });
        for x in t.data() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        offset += t.len();
    }
    (bytes, entries)
}

/// Hex SHA-256 of the tensors' little-endian encoding.
pub fn tensors_digest(tensors: &[(&str, &Tensor)]) -> String {
    let (bytes, _) = encode(tensors);
    hex::encode(Sha256::digest(&bytes))
}

pub fn write_container(dir: &Path, stem: &str, tensors: &[(&str, &Tensor)], meta: Value) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (bytes, entries) = encode(tensors);
    let bin_name = format!("{stem}.bin");
    let header = Header {
        version: CONTAINER_VERSION,
        bin: bin_name.clone(),
        sha256: hex::encode(Sha256::digest(&bytes)),
        tensors: entries,
        meta,
    };
    let bin_path = dir.join(&bin_name);
    fs::write(&bin_path, &bytes).map_err(|e| Error::io(&bin_path, e))?;
    let json_path = dir.join(format!("{stem}.json"));
    let json = serde_json::to_string_pretty(&header).expect("serializable") + "\n";
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))
}

pub fn read_container(dir: &Path, stem: &str) -> Result<(Vec<(String, Tensor)>, Value)> {
    let json_path = dir.join(format!("{stem}.json"));
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let header: Header = serde_json::from_str(&text).map_err(|e| Error::format(&json_path, e.to_string()))?;
    if header.version != CONTAINER_VERSION {
        return Err(Error::format(&json_path, format!("unsupported version {}", header.version)));
    }
    let bin_path = dir.join(&header.bin);
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    if hex::encode(Sha256::digest(&bytes)) != header.sha256 {
        return Err(Error::format(&bin_path, "checksum mismatch"));
    }
    let floats: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut out = Vec::with_capacity(header.tensors.len());
    for e in header.tensors {
        let n: usize = e.shape.iter().product();
        let data = floats
            .get(e.offset..e.offset + n)
            .ok_or_else(|| Error::format(&bin_path, format!("tensor {} out of range", e.name)))?
            .to_vec();
        out.push((e.name, Tensor::new(e.shape, data)?));
    }
    Ok((out, header.meta))
}
