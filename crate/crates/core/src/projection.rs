//! Gaussian 2-stable hash family `h(o) = a . o` and the projections built on it.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::Dataset;
use crate::error::{ensure, Error, Result};

/// Scalar types a point may be given in. Projections always accumulate in `f64`.
pub trait Coord: Copy {
    fn to_f64(self) -> f64;
}

impl Coord for f32 {
    #[inline]
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Coord for f64 {
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// `L x K` Gaussian projection vectors of length `d`.
///
/// Coefficients are drawn from a ChaCha8 stream seeded with `seed` in
/// `(space, hash, coordinate)` order, so `(d, K, L, seed)` fully determines
/// the family.
#[derive(Debug, Clone, PartialEq)]
pub struct HashFamily {
    dim: usize,
    hashes: usize,
    spaces: usize,
    seed: Option<u64>,
    coefficients: Vec<f64>,
}

impl HashFamily {
    pub fn sample(dim: usize, hashes: usize, spaces: usize, seed: u64) -> Result<Self> {
        ensure(dim > 0 && hashes > 0 && spaces > 0, "d, K and L must be positive")?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coefficients = (0..dim * hashes * spaces).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        Ok(HashFamily { dim, hashes, spaces, seed: Some(seed), coefficients })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Builds a family from explicit coefficients laid out `[space][hash][coord]`.
    pub fn from_coefficients(dim: usize, hashes: usize, spaces: usize, coefficients: Vec<f64>) -> Result<Self> {
        ensure(dim > 0 && hashes > 0 && spaces > 0, "d, K and L must be positive")?;
        ensure(coefficients.len() == dim * hashes * spaces, "coefficient count must equal d * K * L")?;
        Ok(HashFamily { dim, hashes, spaces, seed: None, coefficients })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Projected dimension `K`.
    pub fn hashes(&self) -> usize {
        self.hashes
    }

    /// Number of independent projected spaces `L`.
    pub fn spaces(&self) -> usize {
        self.spaces
    }

    /// The sampling seed; `None` for families built from explicit coefficients.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn vector(&self, space: usize, hash: usize) -> &[f64] {
        let start = (space * self.hashes + hash) * self.dim;
        &self.coefficients[start..start + self.dim]
    }

    pub fn project_into<T: Coord>(&self, point: &[T], space: usize, out: &mut [f64]) -> Result<()> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: point.len() });
        }
        ensure(space < self.spaces, "space index out of range")?;
        debug_assert_eq!(out.len(), self.hashes);
        let block = &self.coefficients[space * self.hashes * self.dim..(space + 1) * self.hashes * self.dim];
        for (slot, a) in out.iter_mut().zip(block.chunks_exact(self.dim)) {
            *slot = a.iter().zip(point).map(|(&w, &x)| w * x.to_f64()).sum();
        }
        Ok(())
    }

    /// `H_i(o)`: the K hash values of `point` in projected space `space`.
    pub fn project_point<T: Coord>(&self, point: &[T], space: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.hashes];
        self.project_into(point, space, &mut out)?;
        Ok(out)
    }

    pub fn project_dataset(&self, data: &Dataset) -> Result<ProjectedDataset> {
        ensure(!data.is_empty(), "dataset is empty")?;
        if data.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: data.dim() });
        }
        let n = data.len();
        let mut values = vec![0.0; self.spaces * n * self.hashes];
        for space in 0..self.spaces {
            let block = &mut values[space * n * self.hashes..(space + 1) * n * self.hashes];
            for (row, out) in data.rows().zip(block.chunks_exact_mut(self.hashes)) {
                self.project_into(row, space, out)?;
            }
        }
        Ok(ProjectedDataset { spaces: self.spaces, len: n, dim: self.hashes, values })
    }
}

/// Points in every projected space, laid out `[space][point][coord]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedDataset {
    spaces: usize,
    len: usize,
    dim: usize,
    values: Vec<f64>,
}

impl ProjectedDataset {
    pub fn from_values(spaces: usize, len: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        ensure(spaces > 0 && len > 0 && dim > 0, "empty projected dataset")?;
        ensure(values.len() == spaces * len * dim, "value count must equal L * n * K")?;
        Ok(ProjectedDataset { spaces, len, dim, values })
    }

    pub fn spaces(&self) -> usize {
        self.spaces
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, space: usize, pos: usize) -> &[f64] {
        let start = (space * self.len + pos) * self.dim;
        &self.values[start..start + self.dim]
    }

    /// Coordinate `j` of every point in `space`, in dataset order.
    pub fn column(&self, space: usize, j: usize) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.len).map(move |z| self.point(space, z)[j])
    }
}

/// Piecewise aggregate approximation: `segments` means over consecutive runs
/// of length `floor(d / segments)`, the last run absorbing the remainder.
pub fn paa_summarize<T: Coord>(point: &[T], segments: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; segments];
    paa_into(point, segments, &mut out)?;
    Ok(out)
}

fn paa_into<T: Coord>(point: &[T], segments: usize, out: &mut [f64]) -> Result<()> {
    ensure(segments >= 1, "segment count must be positive")?;
    ensure(segments <= point.len(), "segment count exceeds the point dimension")?;
    let width = point.len() / segments;
    for (s, slot) in out.iter_mut().enumerate() {
        let start = s * width;
        let end = if s + 1 == segments { point.len() } else { start + width };
        let sum: f64 = point[start..end].iter().map(|x| x.to_f64()).sum();
        *slot = sum / (end - start) as f64;
    }
    Ok(())
}

/// Maps original points into the space(s) the DE-Trees index.
#[derive(Debug, Clone, PartialEq)]
pub enum Projector {
    /// LSH projections, one space per tree.
    Lsh(HashFamily),
    /// PAA summaries in a single space (the tree-only baseline).
    Paa { dim: usize, segments: usize },
}

impl Projector {
    pub fn input_dim(&self) -> usize {
        match self {
            Projector::Lsh(f) => f.dim(),
            Projector::Paa { dim, .. } => *dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Projector::Lsh(f) => f.hashes(),
            Projector::Paa { segments, .. } => *segments,
        }
    }

    pub fn spaces(&self) -> usize {
        match self {
            Projector::Lsh(f) => f.spaces(),
            Projector::Paa { .. } => 1,
        }
    }

    /// Factor turning an original-space radius into a projected radius that
    /// loses no point for PAA (`1 / sqrt(floor(d / K))`). LSH radii are
    /// scaled by epsilon instead, so this is only meaningful for `Paa`.
    pub fn paa_radius_scale(dim: usize, segments: usize) -> f64 {
        1.0 / libm::sqrt((dim / segments) as f64)
    }

    pub fn project_into<T: Coord>(&self, point: &[T], space: usize, out: &mut [f64]) -> Result<()> {
        match self {
            Projector::Lsh(f) => f.project_into(point, space, out),
            Projector::Paa { dim, segments } => {
                if point.len() != *dim {
                    return Err(Error::DimensionMismatch { expected: *dim, found: point.len() });
                }
                ensure(space == 0, "space index out of range")?;
                paa_into(point, *segments, out)
            }
        }
    }

    pub fn project_point<T: Coord>(&self, point: &[T], space: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.output_dim()];
        self.project_into(point, space, &mut out)?;
        Ok(out)
    }

    pub fn project_dataset(&self, data: &Dataset) -> Result<ProjectedDataset> {
        match self {
            Projector::Lsh(f) => f.project_dataset(data),
            Projector::Paa { dim, segments } => {
                ensure(!data.is_empty(), "dataset is empty")?;
                if data.dim() != *dim {
                    return Err(Error::DimensionMismatch { expected: *dim, found: data.dim() });
                }
                let mut values = vec![0.0; data.len() * segments];
                for (row, out) in data.rows().zip(values.chunks_exact_mut(*segments)) {
                    paa_into(row, *segments, out)?;
                }
                ProjectedDataset::from_values(1, data.len(), *segments, values)
            }
        }
    }
}
