//! Dense embedding storage, cosine similarity, and the `.xleb` file format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "XLEB" | u16 version=1 | u16 flags (bit0 = normalized) | u32 rows | u32 dim
//! u32 id count | (u16 len, utf-8 bytes) * count
//! f32 * rows * dim   (row-major)
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"XLEB";
pub const VERSION: u16 = 1;
const FLAG_NORMALIZED: u16 = 1;

/// Allowed deviation of a row norm from 1 when the matrix is flagged normalized.
pub const NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero vector{}", .row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    ZeroVector { row: Option<usize> },
    #[error("format error: {0}")]
    Format(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("row {row} is not unit-norm (norm {norm})")]
    NotNormalized { row: usize, norm: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Dot product with 64-bit accumulation.
#[inline]
pub fn dot(u: &[f32], v: &[f32]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(&a, &b)| f64::from(a) * f64::from(b))
        .sum()
}

#[inline]
pub fn norm(u: &[f32]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine_similarity(u: &[f32], v: &[f32]) -> Result<f64, EmbeddingError> {
    if u.len() != v.len() {
        return Err(EmbeddingError::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbeddingError::ZeroVector { row: None });
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Row-major `f32` matrix keyed by item id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    normalized: bool,
    index: HashMap<String, usize>,
}

impl EmbeddingMatrix {
    /// Builds an unnormalized matrix.
    pub fn new(dim: usize, ids: Vec<String>, data: Vec<f32>) -> Result<Self, EmbeddingError> {
        Self::build(dim, ids, data, false)
    }

    fn build(
        dim: usize,
        ids: Vec<String>,
        data: Vec<f32>,
        normalized: bool,
    ) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::Format("dim must be positive".into()));
        }
        if data.len() != ids.len() * dim {
            return Err(EmbeddingError::Format(format!(
                "payload has {} values, expected {} rows x {dim}",
                data.len(),
                ids.len()
            )));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (ix, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), ix).is_some() {
                return Err(EmbeddingError::DuplicateId(id.clone()));
            }
        }
        let m = Self {
            dim,
            ids,
            data,
            normalized,
            index,
        };
        if normalized {
            for r in 0..m.rows() {
                let n = norm(m.row(r));
                if (n - 1.0).abs() > NORM_TOLERANCE {
                    return Err(EmbeddingError::NotNormalized { row: r, norm: n });
                }
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, ix: usize) -> &[f32] {
        &self.data[ix * self.dim..(ix + 1) * self.dim]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index_of(id).map(|ix| self.row(ix))
    }

    /// Copy with every row scaled to unit L2 norm.
    pub fn l2_normalize(&self) -> Result<Self, EmbeddingError> {
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..self.rows() {
            let row = self.row(r);
            let n = norm(row);
            if n == 0.0 || !n.is_finite() {
                return Err(EmbeddingError::ZeroVector { row: Some(r) });
            }
            data.extend(row.iter().map(|&x| (f64::from(x) / n) as f32));
        }
        Self::build(self.dim, self.ids.clone(), data, true)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let flags = if self.normalized { FLAG_NORMALIZED } else { 0 };
        out.extend_from_slice(&flags.to_le_bytes());
        out.extend_from_slice(&(self.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u32).to_le_bytes());
        for id in &self.ids {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EmbeddingError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(EmbeddingError::Format("bad magic".into()));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(EmbeddingError::Format(format!(
                "unsupported version {version}"
            )));
        }
        let flags = r.u16()?;
        if flags & !FLAG_NORMALIZED != 0 {
            return Err(EmbeddingError::Format(format!("unknown flags {flags:#x}")));
        }
        let rows = r.u32()? as usize;
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(EmbeddingError::Format("dim must be positive".into()));
        }
        let count = r.u32()? as usize;
        if count != rows {
            return Err(EmbeddingError::Format(format!(
                "id table has {count} entries for {rows} rows"
            )));
        }
        let mut ids = Vec::with_capacity(rows);
        for _ in 0..count {
            let len = r.u16()? as usize;
            let s = std::str::from_utf8(r.take(len)?)
                .map_err(|e| EmbeddingError::Format(format!("id is not utf-8: {e}")))?;
            ids.push(s.to_string());
        }
        let payload_len = rows
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| EmbeddingError::Format("payload size overflows".into()))?;
        let payload = r.take(payload_len)?;
        if r.pos != bytes.len() {
            return Err(EmbeddingError::Format(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::build(dim, ids, data, flags & FLAG_NORMALIZED != 0)
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EmbeddingError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| EmbeddingError::Format("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, EmbeddingError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, EmbeddingError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
