//! Point clouds in ℝ^d.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `N` points in ℝ^d stored row-major, plus the number of descent steps that
/// produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSystem {
    data: Vec<f64>,
    dim: usize,
    pub generation: u64,
}

impl ParticleSystem {
    /// Builds a system from a row-major buffer. `data.len()` must be a nonzero
    /// multiple of `dim`.
    pub fn from_flat(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("particle dimension must be positive"));
        }
        if data.is_empty() {
            return Err(Error::input("particle system must contain at least one point"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::input(format!(
                "buffer of length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite coordinate in particle {}",
                pos / dim
            )));
        }
        Ok(Self {
            data,
            dim,
            generation: 0,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::input("particle system must contain at least one point"))?;
        let mut data = Vec::with_capacity(dim * rows.len());
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::input(format!(
                    "row {i} has dimension {}, expected {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::from_flat(data, dim)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Every point shifted by `t`.
    pub fn translated(&self, t: &[f64]) -> Result<Self> {
        if t.len() != self.dim {
            return Err(Error::input("translation dimension mismatch"));
        }
        let mut out = self.clone();
        for p in out.data.chunks_exact_mut(self.dim) {
            for (c, s) in p.iter_mut().zip(t) {
                *c += s;
            }
        }
        Ok(out)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in self.points() {
            for (a, b) in m.iter_mut().zip(p) {
                *a += b;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

pub(crate) fn check_same_dim(a: &ParticleSystem, b: &ParticleSystem) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::input(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}
