//! Versioned tensor container shared by checkpoints and embedding indexes.
//!
//! ```text
//! MAGIC (8 bytes) | header length n (u64 LE) | header JSON (n bytes) | f64 LE data
//! ```
//!
//! The header lists every array with its shape and byte offset into the
//! data section, in canonical order, plus the provenance of the artifact.

use medqa_core::nn::{ArchConfig, ModelParams, Tensor, Weights};
use medqa_core::pipeline::{EmbeddingIndex, IndexEntry};
use serde::{Deserialize, Serialize};

use super::FormatError;

pub const MAGIC: &[u8; 8] = b"MEDQATNS";
pub const TENSOR_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactKind {
    Checkpoint,
    Index,
}

/// Where an artifact came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactMeta {
    pub stage: String,
    pub step: usize,
    pub config_hash: String,
    pub tokenizer_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub version: u32,
    pub kind: ArtifactKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch: Option<ArchConfig>,
    pub arrays: Vec<ArrayEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<String>>,
    pub meta: ArtifactMeta,
}

fn write(header: &Header, arrays: &[&[f64]]) -> Result<Vec<u8>, FormatError> {
    let json = serde_json::to_vec(header)?;
    let n_values: usize = arrays.iter().map(|a| a.len()).sum();
    let mut out = Vec::with_capacity(16 + json.len() + 8 * n_values);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for a in arrays {
        for v in *a {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn manifest<'a>(named: impl IntoIterator<Item = (String, &'a [usize])>) -> Vec<ArrayEntry> {
    let mut offset = 0;
    named
        .into_iter()
        .map(|(name, shape)| {
            let e = ArrayEntry { name, shape: shape.to_vec(), offset };
            offset += 8 * shape.iter().product::<usize>();
            e
        })
        .collect()
}

fn corrupt(msg: impl Into<String>) -> FormatError {
    FormatError::Corrupt(msg.into())
}

/// Split a file into its header and data section, checking that the
/// manifest tiles the data exactly.
fn read(bytes: &[u8], kind: ArtifactKind) -> Result<(Header, &[u8]), FormatError> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if n > body.len() {
        return Err(corrupt("header runs past end of file"));
    }
    let header: Header = serde_json::from_slice(&body[..n])?;
    if header.version != TENSOR_FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion {
            what: "tensor file",
            found: header.version,
            expected: TENSOR_FORMAT_VERSION,
        });
    }
    if header.kind != kind {
        return Err(corrupt(format!("expected a {kind:?} file, found {:?}", header.kind)));
    }
    let data = &body[n..];
    let mut expect = 0;
    for a in &header.arrays {
        if a.offset != expect {
            return Err(corrupt(format!("array {} at offset {}, expected {expect}", a.name, a.offset)));
        }
        expect += 8 * a.shape.iter().product::<usize>();
    }
    if expect != data.len() {
        return Err(corrupt(format!("data section holds {} bytes, manifest needs {expect}", data.len())));
    }
    Ok((header, data))
}

fn floats(data: &[u8], entry: &ArrayEntry) -> Vec<f64> {
    let len = entry.shape.iter().product::<usize>();
    data[entry.offset..entry.offset + 8 * len]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect()
}

pub fn encode_checkpoint(params: &ModelParams, meta: &ArtifactMeta) -> Result<Vec<u8>, FormatError> {
    let named = params.weights.named();
    let header = Header {
        version: TENSOR_FORMAT_VERSION,
        kind: ArtifactKind::Checkpoint,
        arch: Some(params.arch),
        arrays: manifest(named.iter().map(|(n, t)| (n.clone(), t.shape.as_slice()))),
        ids: None,
        meta: meta.clone(),
    };
    let data: Vec<&[f64]> = named.iter().map(|(_, t)| t.data.as_slice()).collect();
    write(&header, &data)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelParams, ArtifactMeta), FormatError> {
    let (header, data) = read(bytes, ArtifactKind::Checkpoint)?;
    let arch = header.arch.ok_or_else(|| corrupt("checkpoint without architecture"))?;
    arch.validate()?;
    let mut weights = Weights::zeros(&arch);
    let names: Vec<String> = weights.named().into_iter().map(|(n, _)| n).collect();
    if names.len() != header.arrays.len() {
        return Err(corrupt(format!("{} arrays listed, architecture has {}", header.arrays.len(), names.len())));
    }
    for ((slot, name), entry) in weights.arrays_mut().into_iter().zip(&names).zip(&header.arrays) {
        if &entry.name != name || entry.shape != slot.shape {
            return Err(corrupt(format!(
                "array {} {:?} does not match {name} {:?}",
                entry.name, entry.shape, slot.shape
            )));
        }
        *slot = Tensor::from_vec(&entry.shape, floats(data, entry))?;
    }
    Ok((ModelParams { arch, weights }, header.meta))
}

pub fn encode_index(index: &EmbeddingIndex, meta: &ArtifactMeta) -> Result<Vec<u8>, FormatError> {
    let shape = [index.entries.len(), index.dim];
    let header = Header {
        version: TENSOR_FORMAT_VERSION,
        kind: ArtifactKind::Index,
        arch: None,
        arrays: manifest([(String::from("vectors"), &shape[..])]),
        ids: Some(index.entries.iter().map(|e| e.id.clone()).collect()),
        meta: meta.clone(),
    };
    let flat: Vec<f64> = index.entries.iter().flat_map(|e| e.vector.iter().copied()).collect();
    write(&header, &[&flat])
}

/// Vectors are restored verbatim, not renormalized.
pub fn decode_index(bytes: &[u8]) -> Result<(EmbeddingIndex, ArtifactMeta), FormatError> {
    let (header, data) = read(bytes, ArtifactKind::Index)?;
    let [entry] = header.arrays.as_slice() else {
        return Err(corrupt("index must hold exactly one array"));
    };
    let &[n, dim] = entry.shape.as_slice() else {
        return Err(corrupt("index array must be two-dimensional"));
    };
    let ids = header.ids.ok_or_else(|| corrupt("index without ids"))?;
    if ids.len() != n {
        return Err(corrupt(format!("{} ids for {n} vectors", ids.len())));
    }
    let flat = floats(data, entry);
    let entries = ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| IndexEntry { id, vector: flat[i * dim..(i + 1) * dim].to_vec() })
        .collect();
    Ok((EmbeddingIndex { dim, entries }, header.meta))
}
