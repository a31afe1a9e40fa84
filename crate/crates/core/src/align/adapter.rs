//! Linear adapter `y = W x + b` over frozen base embeddings, and its
//! `.xlad` checkpoint format.
//!
//! ```text
//! "XLAD" | u16 version=1 | u16 flags=0 | u32 dim
//! f64 * dim * dim  (W, row-major) | f64 * dim  (b)      all little-endian
//! ```

use std::fs;
use std::path::Path;

use super::AlignError;
use crate::embedding::EmbeddingMatrix;

pub const MAGIC: &[u8; 4] = b"XLAD";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterParams {
    dim: usize,
    /// Row-major `dim x dim`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub(crate) m_w: Vec<f64>,
    pub(crate) v_w: Vec<f64>,
    pub(crate) m_b: Vec<f64>,
    pub(crate) v_b: Vec<f64>,
    pub(crate) step: u64,
}

/// Gradient of a scalar loss with respect to `W` (row-major) and `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGrads {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl AdapterGrads {
    pub fn zeros(dim: usize) -> Self {
        Self {
            w: vec![0.0; dim * dim],
            b: vec![0.0; dim],
        }
    }

    /// Accumulates `g x^T` into `w` and `g` into `b`, for `y = W x + b`.
    pub fn add_outer(&mut self, g: &[f64], x: &[f64]) {
        let d = g.len();
        for (r, &gr) in g.iter().enumerate() {
            if gr == 0.0 {
                continue;
            }
            let row = &mut self.w[r * d..(r + 1) * d];
            for (wc, xc) in row.iter_mut().zip(x) {
                *wc += gr * xc;
            }
            self.b[r] += gr;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.w.iter().chain(&self.b).copied()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }
}

impl AdapterParams {
    pub fn identity(dim: usize) -> Self {
        let mut w = vec![0.0; dim * dim];
        for i in 0..dim {
            w[i * dim + i] = 1.0;
        }
        Self::from_parts(dim, w, vec![0.0; dim]).expect("identity shape")
    }

    pub fn from_parts(dim: usize, w: Vec<f64>, b: Vec<f64>) -> Result<Self, AlignError> {
        if dim == 0 || w.len() != dim * dim || b.len() != dim {
            return Err(AlignError::DimensionMismatch {
                left: w.len() + b.len(),
                right: dim * dim + dim,
            });
        }
        if w.iter().chain(&b).any(|x| !x.is_finite()) {
            return Err(AlignError::NonFiniteInput);
        }
        Ok(Self {
            dim,
            m_w: vec![0.0; w.len()],
            v_w: vec![0.0; w.len()],
            m_b: vec![0.0; dim],
            v_b: vec![0.0; dim],
            w,
            b,
            step: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of optimizer steps taken.
    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }

    /// Parameter `i` in the order `W` (row-major) then `b`.
    pub fn param_mut(&mut self, i: usize) -> &mut f64 {
        let nw = self.w.len();
        if i < nw {
            &mut self.w[i]
        } else {
            &mut self.b[i - nw]
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        let d = self.dim;
        (0..d)
            .map(|r| {
                let row = &self.w[r * d..(r + 1) * d];
                row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.b[r]
            })
            .collect()
    }

    /// Applies the adapter to every row. The result is unnormalized.
    pub fn apply_matrix(&self, emb: &EmbeddingMatrix) -> Result<EmbeddingMatrix, AlignError> {
        if emb.dim() != self.dim {
            return Err(AlignError::DimensionMismatch {
                left: emb.dim(),
                right: self.dim,
            });
        }
        let mut data = Vec::with_capacity(emb.data().len());
        for r in 0..emb.rows() {
            let x: Vec<f64> = emb.row(r).iter().map(|&v| f64::from(v)).collect();
            data.extend(self.apply(&x).into_iter().map(|v| v as f32));
        }
        Ok(EmbeddingMatrix::new(self.dim, emb.ids().to_vec(), data)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.n_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for x in self.w.iter().chain(&self.b) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AlignError> {
        let fmt = |m: &str| AlignError::Format(m.to_string());
        if bytes.len() < 12 {
            return Err(fmt("unexpected end of file"));
        }
        if &bytes[0..4] != MAGIC {
            return Err(fmt("bad magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(AlignError::Format(format!("unsupported version {version}")));
        }
        if u16::from_le_bytes([bytes[6], bytes[7]]) != 0 {
            return Err(fmt("unknown flags"));
        }
        let dim = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
        if dim == 0 {
            return Err(fmt("dim must be positive"));
        }
        let n = dim
            .checked_mul(dim)
            .and_then(|x| x.checked_add(dim))
            .ok_or_else(|| fmt("dim overflows"))?;
        if bytes.len() != 12 + 8 * n {
            return Err(AlignError::Format(format!(
                "expected {} bytes, found {}",
                12 + 8 * n,
                bytes.len()
            )));
        }
        let vals: Vec<f64> = bytes[12..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let (w, b) = vals.split_at(dim * dim);
        Self::from_parts(dim, w.to_vec(), b.to_vec())
    }

    pub fn save(&self, path: &Path) -> Result<(), AlignError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AlignError> {
        Self::from_bytes(&fs::read(path)?)
    }
}
