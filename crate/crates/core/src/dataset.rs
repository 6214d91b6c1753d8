use alloc::vec::Vec;

use crate::error::{ensure, Error, Result};

/// A dense row-major `n x d` matrix of `f32` points.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    values: Vec<f32>,
}

impl Dataset {
    /// Wraps a flat row-major buffer. `values.len()` must be a multiple of `dim`.
    pub fn new(dim: usize, values: Vec<f32>) -> Result<Self> {
        ensure(dim > 0, "dimension must be positive")?;
        ensure(values.len().is_multiple_of(dim), "buffer length is not a multiple of the dimension")?;
        Ok(Dataset { dim, values })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::InvalidArgument("no rows"))?;
        let dim = first.as_ref().len();
        let mut values = Vec::with_capacity(dim * rows.len());
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: row.len() });
            }
            values.extend_from_slice(row);
        }
        Dataset::new(dim, values)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.values
    }
}

/// Squared Euclidean distance, accumulated in `f64`.
#[inline]
pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

#[inline]
pub fn distance(a: &[f32], b: &[f32]) -> f64 {
    libm::sqrt(squared_distance(a, b))
}

#[inline]
pub(crate) fn squared_distance_f64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
