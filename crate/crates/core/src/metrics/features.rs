use std::io::{Cursor, Read};
use std::path::Path;

use crate::error::{arg_err, Error, Result};
use crate::nn::checkpoint::write_atomic;

pub const FEATURE_MAGIC: &[u8; 8] = b"FSYNFEAT";
pub const FEATURE_VERSION: u32 = 1;

/// Row-major `n x d` embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub data: Vec<f64>,
    pub n: usize,
    pub d: usize,
    pub extractor_id: String,
    pub source_id: String,
}

impl FeatureSet {
    pub fn new(data: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if data.len() != n * d {
            return Err(arg_err(format!("feature buffer has {} values, expected {n}x{d}", data.len())));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(arg_err(format!("non-finite feature at row {}", i / d.max(1))));
        }
        Ok(Self { data, n, d, extractor_id: String::new(), source_id: String::new() })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(arg_err("feature rows differ in length"));
        }
        Self::new(rows.concat(), rows.len(), d)
    }

    pub fn with_ids(mut self, extractor_id: impl Into<String>, source_id: impl Into<String>) -> Self {
        self.extractor_id = extractor_id.into();
        self.source_id = source_id.into();
        self
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d.max(1)).take(self.n)
    }

    pub fn select(&self, idx: &[usize]) -> FeatureSet {
        let data = idx.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        FeatureSet { data, n: idx.len(), d: self.d, extractor_id: self.extractor_id.clone(), source_id: self.source_id.clone() }
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for r in self.rows() {
            m.iter_mut().zip(r).for_each(|(a, b)| *a += b);
        }
        m.iter_mut().for_each(|v| *v /= self.n as f64);
        m
    }

    /// Header (magic, version, n, d, extractor id, source id) followed by
    /// little-endian f32 rows.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + self.data.len() * 4);
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&(self.d as u64).to_le_bytes());
        for s in [&self.extractor_id, &self.source_id] {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(format!("feature file: {m}"));
        let mut cur = Cursor::new(bytes);
        let mut magic = [0u8; 8];
        cur.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != FEATURE_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut u32b = [0u8; 4];
        let mut u64b = [0u8; 8];
        cur.read_exact(&mut u32b).map_err(|_| bad("truncated header"))?;
        let version = u32::from_le_bytes(u32b);
        if version != FEATURE_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        cur.read_exact(&mut u64b).map_err(|_| bad("truncated header"))?;
        let n = u64::from_le_bytes(u64b) as usize;
        cur.read_exact(&mut u64b).map_err(|_| bad("truncated header"))?;
        let d = u64::from_le_bytes(u64b) as usize;
        let mut ids = Vec::new();
        for _ in 0..2 {
            cur.read_exact(&mut u32b).map_err(|_| bad("truncated header"))?;
            let mut s = vec![0u8; u32::from_le_bytes(u32b) as usize];
            cur.read_exact(&mut s).map_err(|_| bad("truncated id"))?;
            ids.push(String::from_utf8(s).map_err(|_| bad("id is not utf-8"))?);
        }
        let rest = &bytes[cur.position() as usize..];
        if rest.len() != n * d * 4 {
            return Err(bad(&format!("payload has {} bytes, expected {}", rest.len(), n * d * 4)));
        }
        let data = rest.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
        let source = ids.pop().unwrap_or_default();
        let extractor = ids.pop().unwrap_or_default();
        Ok(Self::new(data, n, d)?.with_ids(extractor, source))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Load { path: path.to_path_buf(), reason: e.to_string() })?;
        Self::from_bytes(&bytes)
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn check_same_dim(a: &FeatureSet, b: &FeatureSet) -> Result<()> {
    if a.d != b.d {
        return Err(arg_err(format!("feature dimensions differ: {} vs {}", a.d, b.d)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trip() {
        let f = FeatureSet::from_rows(&[vec![1.0, 2.5], vec![-3.0, 0.25], vec![0.0, 8.0]])
            .unwrap()
            .with_ids("pca-2", "held_out");
        let back = FeatureSet::from_bytes(&f.to_bytes()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn rejects_non_finite_and_bad_headers() {
        assert!(FeatureSet::new(vec![1.0, f64::NAN], 1, 2).is_err());
        let mut bytes = FeatureSet::from_rows(&[vec![1.0]]).unwrap().to_bytes();
        bytes[0] = b'X';
        assert!(FeatureSet::from_bytes(&bytes).is_err());
    }
}
