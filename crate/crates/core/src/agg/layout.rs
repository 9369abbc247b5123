//! Coefficient layouts for encrypted gradients.
//!
//! A norm chunk of `n_c` values sits at coefficients `k·s` (forward) and
//! `(n_c - 1 - k)·s` (reversed), so their product carries the chunk's squared
//! norm at `T0 = (n_c - 1)·s` and every other term on a multiple of `s`.
//! After shifting by `X^{-T0}` the norm sits at coefficient 0 and multiplying
//! by a dense payload of at most `s` values leaves coefficients `[0, s)`
//! untouched by the off-target terms whenever `n_c·s <= N`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackingLayout {
    degree: usize,
    dim: usize,
    stride: usize,
    norm_chunk: usize,
    payload_chunk: usize,
}

impl PackingLayout {
    pub fn new(degree: usize, dim: usize, stride: usize, norm_chunk: usize, payload_chunk: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("empty gradient".into()));
        }
        if stride == 0 || norm_chunk == 0 || payload_chunk == 0 || norm_chunk * stride > degree {
            return Err(Error::InvalidInput(format!(
                "layout stride {stride}, chunk {norm_chunk} does not fit degree {degree}"
            )));
        }
        Ok(Self {
            degree,
            dim,
            stride,
            norm_chunk,
            payload_chunk,
        })
    }

    /// Square-root stride layout used by the secure pipeline.
    pub fn pipeline(degree: usize, dim: usize) -> Result<Self> {
        let stride = 1usize << (degree.trailing_zeros() / 2);
        let norm_chunk = (degree / stride).min(dim.max(1));
        Self::new(degree, dim, stride, norm_chunk, stride)
    }

    /// Contiguous packing: one norm chunk of up to `N/2` values whose norm
    /// lands at coefficient `len - 1`.
    pub fn dense(degree: usize, dim: usize) -> Result<Self> {
        Self::new(degree, dim, 1, dim.min(degree / 2).max(1), 1)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of encrypted gradient coordinates.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn norm_chunk(&self) -> usize {
        self.norm_chunk
    }

    pub fn payload_chunk(&self) -> usize {
        self.payload_chunk
    }

    pub fn norm_chunks(&self) -> usize {
        self.dim.div_ceil(self.norm_chunk)
    }

    pub fn payload_chunks(&self) -> usize {
        self.dim.div_ceil(self.payload_chunk)
    }

    /// Coefficient of the squared norm in a forward-reversed product.
    pub fn norm_index(&self) -> usize {
        (self.norm_chunk - 1) * self.stride
    }

    /// Whether products with a shifted norm leave payload coefficients clean.
    pub fn is_pipeline_safe(&self) -> bool {
        self.payload_chunk <= self.stride && self.norm_chunk * self.stride <= self.degree
    }

    fn chunk(values: &[f64], size: usize, c: usize) -> &[f64] {
        let start = c * size;
        &values[start.min(values.len())..((c + 1) * size).min(values.len())]
    }

    pub fn forward_coeffs(&self, grad: &[f64], c: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.degree];
        for (k, &v) in Self::chunk(&grad[..self.dim], self.norm_chunk, c).iter().enumerate() {
            out[k * self.stride] = v;
        }
        out
    }

    pub fn reversed_coeffs(&self, grad: &[f64], c: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.degree];
        for (k, &v) in Self::chunk(&grad[..self.dim], self.norm_chunk, c).iter().enumerate() {
            out[(self.norm_chunk - 1 - k) * self.stride] = v;
        }
        out
    }

    /// Dense chunk `c` of any vector at coefficients `[0, payload_chunk)`.
    pub fn payload_coeffs(&self, values: &[f64], c: usize) -> Vec<f64> {
        Self::chunk(values, self.payload_chunk, c).to_vec()
    }
}
