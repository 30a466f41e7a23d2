//! Checksummed binary container for named f32 tensors.
//!
//! Layout: 4-byte magic, u64 LE manifest length, u32 LE CRC-32 of the
//! manifest, the JSON manifest, then the payloads back to back in manifest
//! order as little-endian f32.

use std::path::Path;

use serde::{Deserialize, Serialize};

pub const DTYPE: &str = "f32le";

#[derive(Debug, thiserror::Error)]
pub enum ContainerError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a {expected} container (magic {found:?})")]
    BadMagic { expected: String, found: Vec<u8> },
    #[error("truncated container: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("checksum mismatch in {section}: stored {stored:08x}, computed {computed:08x}")]
    Checksum { section: String, stored: u32, computed: u32 },
    #[error("unsupported container version {found} (this build reads version {expected})")]
    Version { found: u32, expected: u32 },
    #[error("malformed manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Self {
        Self { name: name.into(), shape, data }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PayloadEntry {
    name: String,
    shape: Vec<usize>,
    bytes: u64,
    crc32: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    dtype: String,
    payloads: Vec<PayloadEntry>,
    metadata: serde_json::Value,
}

/// Encodes tensors and free-form metadata.
pub fn encode(magic: &[u8; 4], version: u32, metadata: serde_json::Value, tensors: &[Tensor]) -> Vec<u8> {
    let payloads: Vec<Vec<u8>> = tensors
        .iter()
        .map(|t| {
            debug_assert_eq!(t.shape.iter().product::<usize>(), t.data.len(), "{}", t.name);
            t.data.iter().flat_map(|v| v.to_le_bytes()).collect()
        })
        .collect();
    let manifest = Manifest {
        version,
        dtype: DTYPE.to_string(),
        payloads: tensors
            .iter()
            .zip(&payloads)
            .map(|(t, p)| PayloadEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
                bytes: p.len() as u64,
                crc32: crc32fast::hash(p),
            })
            .collect(),
        metadata,
    };
    let text = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    let mut out = Vec::with_capacity(16 + text.len() + payloads.iter().map(Vec::len).sum::<usize>());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(&text).to_le_bytes());
    out.extend_from_slice(&text);
    for p in &payloads {
        out.extend_from_slice(p);
    }
    out
}

/// Decodes a container, verifying magic, version, size and every checksum.
pub fn decode(
    bytes: &[u8],
    magic: &[u8; 4],
    version: u32,
) -> Result<(serde_json::Value, Vec<Tensor>), ContainerError> {
    let total = bytes.len() as u64;
    if bytes.len() < 16 {
        return Err(ContainerError::Truncated { expected: 16, found: total });
    }
    if &bytes[..4] != magic {
        return Err(ContainerError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: bytes[..4].to_vec(),
        });
    }
    let mlen = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes"));
    let stored = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes"));
    let header_end = 16u64.checked_add(mlen).filter(|&e| e <= total).ok_or(ContainerError::Truncated {
        expected: 16u64.saturating_add(mlen),
        found: total,
    })? as usize;
    let text = &bytes[16..header_end];
    let computed = crc32fast::hash(text);
    if computed != stored {
        return Err(ContainerError::Checksum { section: "manifest".into(), stored, computed });
    }
    let manifest: Manifest = serde_json::from_slice(text).map_err(|e| ContainerError::Manifest(e.to_string()))?;
    if manifest.version != version {
        return Err(ContainerError::Version { found: manifest.version, expected: version });
    }
    if manifest.dtype != DTYPE {
        return Err(ContainerError::Manifest(format!("unsupported dtype {:?}", manifest.dtype)));
    }
    let payload_bytes: u64 = manifest.payloads.iter().map(|p| p.bytes).sum();
    let expected = header_end as u64 + payload_bytes;
    if expected != total {
        return Err(ContainerError::Truncated { expected, found: total });
    }

    let mut offset = header_end;
    let mut tensors = Vec::with_capacity(manifest.payloads.len());
    for entry in &manifest.payloads {
        let count: usize = entry.shape.iter().product();
        if entry.bytes != 4 * count as u64 {
            return Err(ContainerError::Manifest(format!(
                "payload {} declares {} bytes for shape {:?}",
                entry.name, entry.bytes, entry.shape
            )));
        }
        let chunk = &bytes[offset..offset + entry.bytes as usize];
        offset += entry.bytes as usize;
        let computed = crc32fast::hash(chunk);
        if computed != entry.crc32 {
            return Err(ContainerError::Checksum { section: entry.name.clone(), stored: entry.crc32, computed });
        }
        let data = chunk.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        tensors.push(Tensor { name: entry.name.clone(), shape: entry.shape.clone(), data });
    }
    Ok((manifest.metadata, tensors))
}

pub fn write_file(
    path: &Path,
    magic: &[u8; 4],
    version: u32,
    metadata: serde_json::Value,
    tensors: &[Tensor],
) -> Result<(), ContainerError> {
    std::fs::write(path, encode(magic, version, metadata, tensors))?;
    Ok(())
}

pub fn read_file(
    path: &Path,
    magic: &[u8; 4],
    version: u32,
) -> Result<(serde_json::Value, Vec<Tensor>), ContainerError> {
    decode(&std::fs::read(path)?, magic, version)
}
