//! Versioned checkpoint container.
//!
//! Layout: the 8-byte magic `FSYNCKPT`, a little-endian `u32` format version,
//! a little-endian `u32` header length, a JSON header, then raw little-endian
//! `f32` blocks in manifest order. The header carries the model kind tag, its
//! spec, free-form metadata, and one manifest entry per block.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tch::Tensor;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FSYNCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<i64>,
    /// Offset in `f32` elements from the start of the data section.
    pub offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: String,
    spec: serde_json::Value,
    meta: serde_json::Value,
    manifest: Vec<ManifestEntry>,
}

#[derive(Debug)]
pub struct Checkpoint {
    pub kind: String,
    pub spec: serde_json::Value,
    pub meta: serde_json::Value,
    pub manifest: Vec<ManifestEntry>,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new(kind: &str, spec: serde_json::Value, meta: serde_json::Value) -> Self {
        Self { kind: kind.to_string(), spec, meta, manifest: Vec::new(), tensors: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: &Tensor) {
        self.tensors.insert(name.into(), t.detach().to_kind(tch::Kind::Float).contiguous());
    }

    pub fn insert_prefixed(&mut self, prefix: &str, tensors: impl IntoIterator<Item = (String, Tensor)>) {
        for (name, t) in tensors {
            self.insert(format!("{prefix}{name}"), &t);
        }
    }

    /// Tensors under `prefix`, with the prefix stripped.
    pub fn with_prefix(&self, prefix: &str) -> BTreeMap<String, Tensor> {
        self.tensors
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|s| (s.to_string(), v.shallow_clone())))
            .collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut manifest = Vec::with_capacity(self.tensors.len());
        let mut data: Vec<u8> = Vec::new();
        let mut offset = 0usize;
        for (name, t) in &self.tensors {
            let values = Vec::<f32>::try_from(&t.view([-1]))?;
            manifest.push(ManifestEntry { name: name.clone(), shape: t.size(), offset });
            offset += values.len();
            for v in values {
                data.extend_from_slice(&v.to_le_bytes());
            }
        }
        let header = Header { kind: self.kind.clone(), spec: self.spec.clone(), meta: self.meta.clone(), manifest };
        let header = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + header.len() + data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&data);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let header_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let header_end = 16 + header_len;
        if bytes.len() < header_end {
            return Err(bad("truncated header"));
        }
        let header: Header =
            serde_json::from_slice(&bytes[16..header_end]).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let data = &bytes[header_end..];
        let mut tensors = BTreeMap::new();
        for entry in &header.manifest {
            let numel: i64 = entry.shape.iter().product();
            let start = entry.offset * 4;
            let end = start + numel as usize * 4;
            if end > data.len() {
                return Err(Error::Checkpoint(format!("block {} runs past end of file", entry.name)));
            }
            let values: Vec<f32> = data[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.insert(entry.name.clone(), Tensor::from_slice(&values).view(entry.shape.as_slice()));
        }
        Ok(Self { kind: header.kind, spec: header.spec, meta: header.meta, manifest: header.manifest, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::Load { path: path.to_path_buf(), reason: e.to_string() })?;
        Self::from_bytes(&bytes)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!("expected a {kind} checkpoint, found {}", self.kind)));
        }
        Ok(())
    }
}

/// Copies named tensors into the variables of `vs`; every variable must be present.
pub fn load_into(vs: &tch::nn::VarStore, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
    let vars = vs.variables();
    for (name, var) in &vars {
        let src = tensors
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
        if src.size() != var.size() {
            return Err(Error::Checkpoint(format!(
                "parameter {name} has shape {:?}, model expects {:?}",
                src.size(),
                var.size()
            )));
        }
        tch::no_grad(|| var.shallow_clone().copy_(&src.to_kind(var.kind())));
    }
    Ok(())
}

pub fn var_tensors(vs: &tch::nn::VarStore) -> Vec<(String, Tensor)> {
    let mut v: Vec<_> = vs.variables().into_iter().collect();
    v.sort_by(|a, b| a.0.cmp(&b.0));
    v
}

/// Write to a sibling temp file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
