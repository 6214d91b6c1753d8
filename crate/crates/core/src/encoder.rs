//! Dynamic encoding: data-dependent breakpoints chosen by QuickSelect over a
//! sample, and region lookup producing iSAX symbols.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Result};
use crate::projection::ProjectedDataset;

/// Ranges at or below this length are finished with insertion sort.
const SMALL_RANGE: usize = 16;
const SAMPLED_PIVOT_MIN: usize = 1024;

/// Ascending region boundaries for every `(space, dimension)` row.
#[derive(Debug, Clone, PartialEq)]
pub struct BreakpointTable {
    spaces: usize,
    dims: usize,
    n_regions: usize,
    sample_size: usize,
    boundaries: Vec<f64>,
}

impl BreakpointTable {
    /// Assembles a table from rows laid out `[space][dim][0..=n_regions]`.
    pub fn from_boundaries(
        spaces: usize,
        dims: usize,
        n_regions: usize,
        sample_size: usize,
        boundaries: Vec<f64>,
    ) -> Result<Self> {
        check_regions(n_regions)?;
        ensure(spaces > 0 && dims > 0, "table must have at least one row")?;
        ensure(boundaries.len() == spaces * dims * (n_regions + 1), "boundary count must equal L * K * (N_r + 1)")?;
        ensure(
            boundaries.chunks_exact(n_regions + 1).all(|row| row.windows(2).all(|w| w[0] <= w[1])),
            "breakpoint rows must be non-decreasing",
        )?;
        Ok(BreakpointTable { spaces, dims, n_regions, sample_size, boundaries })
    }

    pub fn spaces(&self) -> usize {
        self.spaces
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    /// Symbol width in bits, `log2(n_regions)`.
    pub fn symbol_bits(&self) -> u8 {
        self.n_regions.trailing_zeros() as u8
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    #[inline]
    pub fn row(&self, space: usize, dim: usize) -> &[f64] {
        let width = self.n_regions + 1;
        let start = (space * self.dims + dim) * width;
        &self.boundaries[start..start + width]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.boundaries
    }
}

fn check_regions(n_regions: usize) -> Result<()> {
    ensure(
        (2..=256).contains(&n_regions) && n_regions.is_power_of_two(),
        "region count must be a power of two in [2, 256]",
    )
}

/// Sample size used for `n` points: `max(ceil(fraction * n), n_regions)`.
pub fn sample_size(n: usize, n_regions: usize, sample_fraction: f64) -> Result<usize> {
    check_regions(n_regions)?;
    ensure(sample_fraction > 0.0 && sample_fraction <= 1.0, "sample fraction must lie in (0, 1]")?;
    ensure(n >= n_regions, "fewer points than regions")?;
    let wanted = libm::ceil(sample_fraction * n as f64) as usize;
    Ok(wanted.clamp(n_regions, n))
}

/// Chooses `N_r + 1` breakpoints for every row of `projected`.
///
/// One sample of point indices (without replacement) is drawn per space and
/// shared by its K rows; each row's values are then split by
/// [`breakpoints_from_sample`].
pub fn select_breakpoints(
    projected: &ProjectedDataset,
    n_regions: usize,
    sample_fraction: f64,
    seed: u64,
) -> Result<BreakpointTable> {
    let n = projected.len();
    let n_s = sample_size(n, n_regions, sample_fraction)?;
    let (spaces, dims) = (projected.spaces(), projected.dim());
    let mut boundaries = Vec::with_capacity(spaces * dims * (n_regions + 1));
    let mut buf = vec![0.0; n_s];
    for space in 0..spaces {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (space as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let picks = rand::seq::index::sample(&mut rng, n, n_s);
        for j in 0..dims {
            for (slot, z) in buf.iter_mut().zip(picks.iter()) {
                *slot = projected.point(space, z)[j];
            }
            boundaries.extend(breakpoints_from_sample(&mut buf, n_regions, &mut rng));
        }
    }
    BreakpointTable::from_boundaries(spaces, dims, n_regions, n_s, boundaries)
}

/// QuickSelect with divide-and-conquer over one row sample.
///
/// Round `z` places `2^(z-1)` breakpoints, each by a QuickSelect restricted
/// to the sub-range left between breakpoints of earlier rounds. Interior
/// breakpoint `m` (1-based, `m < N_r`) is the `(floor(n_s / N_r) * m)`-th
/// smallest sample value. The outer boundaries are the minimum of the first
/// final region and the maximum of the last one. `sample` is permuted.
pub fn breakpoints_from_sample<R: Rng + ?Sized>(sample: &mut [f64], n_regions: usize, rng: &mut R) -> Vec<f64> {
    let n_s = sample.len();
    assert!(n_regions >= 2 && n_regions.is_power_of_two() && n_s >= n_regions);
    let span = n_s / n_regions;
    let mut out = vec![0.0; n_regions + 1];

    // (first breakpoint index, last breakpoint index, sample range start, end), exclusive ends.
    let mut work = vec![(0usize, n_regions, 0usize, n_s)];
    let mut next = Vec::with_capacity(n_regions);
    while !work.is_empty() {
        for &(lo_m, hi_m, start, end) in &work {
            let mid = (lo_m + hi_m) / 2;
            let pos = span * mid - 1;
            quickselect(&mut sample[start..end], pos - start, rng);
            out[mid] = sample[pos];
            if mid - lo_m >= 2 {
                next.push((lo_m, mid, start, pos));
            }
            if hi_m - mid >= 2 {
                next.push((mid, hi_m, pos + 1, end));
            }
        }
        core::mem::swap(&mut work, &mut next);
        next.clear();
    }

    out[0] = sample[..span].iter().copied().fold(f64::INFINITY, f64::min);
    let tail = span * (n_regions - 1);
    out[n_regions] = sample[tail..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out
}

/// Reference scheme: fully sort the sample and read the same order statistics.
pub fn breakpoints_by_sorting(sample: &[f64], n_regions: usize) -> Vec<f64> {
    let n_s = sample.len();
    assert!(n_regions >= 2 && n_s >= n_regions);
    let mut sorted = sample.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let span = n_s / n_regions;
    let mut out = Vec::with_capacity(n_regions + 1);
    out.push(sorted[0]);
    out.extend((1..n_regions).map(|m| sorted[span * m - 1]));
    out.push(sorted[n_s - 1]);
    out
}

/// Moves the `k`-th smallest element of `v` to index `k`, smaller-or-equal
/// elements before it and greater-or-equal after.
///
/// Iterative. Large ranges take their pivot from a random subsample at the
/// rank matching `k`, nudged toward the nearer end so the kept side is small.
pub fn quickselect<R: Rng + ?Sized>(v: &mut [f64], k: usize, rng: &mut R) {
    assert!(k < v.len());
    let (mut lo, mut hi) = (0usize, v.len());
    let mut scratch = Vec::new();
    loop {
        let n = hi - lo;
        if n <= SMALL_RANGE {
            insertion_sort(&mut v[lo..hi]);
            return;
        }
        let pivot = if n >= SAMPLED_PIVOT_MIN {
            sampled_pivot(&v[lo..hi], k - lo, rng, &mut scratch)
        } else {
            v[rng.random_range(lo..hi)]
        };
        let m = lo + partition_by(&mut v[lo..hi], |x| x < pivot);
        if k < m {
            hi = m;
        } else if m > lo {
            lo = m;
        } else {
            // Pivot is the range minimum; peel off every copy of it.
            let m = lo + partition_by(&mut v[lo..hi], |x| x <= pivot);
            if k < m {
                return;
            }
            lo = m;
        }
    }
}

fn sampled_pivot<R: Rng + ?Sized>(v: &[f64], k: usize, rng: &mut R, scratch: &mut Vec<f64>) -> f64 {
    let n = v.len();
    let s = (libm::sqrt(n as f64) as usize * 2).clamp(SMALL_RANGE + 1, n);
    scratch.clear();
    scratch.extend((0..s).map(|_| v[rng.random_range(0..n)]));
    let gap = libm::sqrt(s as f64) as usize;
    let rank = k * s / n;
    let rank = if 2 * k < n { (rank + gap).min(s - 1) } else { rank.saturating_sub(gap) };
    let mut sub = core::mem::take(scratch);
    quickselect(&mut sub, rank, rng);
    let pivot = sub[rank];
    *scratch = sub;
    pivot
}

/// Branch-free Lomuto partition: elements satisfying `pred` move to the
/// front; returns their count.
#[inline]
#[allow(clippy::manual_swap)]
fn partition_by(v: &mut [f64], pred: impl Fn(f64) -> bool) -> usize {
    let mut m = 0;
    for i in 0..v.len() {
        let x = v[i];
        // `x` is already loaded; two plain stores keep the loop branch-free.
        v[i] = v[m];
        v[m] = x;
        m += usize::from(pred(x));
    }
    m
}

fn insertion_sort(v: &mut [f64]) {
    for i in 1..v.len() {
        let x = v[i];
        let mut j = i;
        while j > 0 && v[j - 1] > x {
            v[j] = v[j - 1];
            j -= 1;
        }
        v[j] = x;
    }
}

/// Zero-based region of `value` in a row of `N_r + 1` boundaries.
///
/// Counts interior boundaries strictly below `value`: a value on a boundary
/// belongs to the lower region, the row minimum maps to region 0, and values
/// outside the sampled range clamp to the first or last region.
#[inline]
pub fn locate_region(value: f64, row: &[f64]) -> usize {
    debug_assert!(row.len() >= 3);
    row[1..row.len() - 1].partition_point(|&b| b < value)
}

/// iSAX symbols for every projected coordinate, laid out `[space][point][dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    spaces: usize,
    len: usize,
    dims: usize,
    bits: u8,
    symbols: Vec<u8>,
}

impl EncodedDataset {
    pub fn from_symbols(spaces: usize, len: usize, dims: usize, bits: u8, symbols: Vec<u8>) -> Result<Self> {
        ensure((1..=8).contains(&bits), "symbol width must be 1..=8 bits")?;
        ensure(symbols.len() == spaces * len * dims, "symbol count must equal L * n * K")?;
        ensure(symbols.iter().all(|&s| u16::from(s) < 1 << bits), "symbol exceeds the region count")?;
        Ok(EncodedDataset { spaces, len, dims, bits, symbols })
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

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn symbol_bits(&self) -> u8 {
        self.bits
    }

    #[inline]
    pub fn symbols(&self, space: usize, pos: usize) -> &[u8] {
        let start = (space * self.len + pos) * self.dims;
        &self.symbols[start..start + self.dims]
    }

    /// All symbols of one space, `[point][dim]`.
    pub fn space(&self, space: usize) -> &[u8] {
        &self.symbols[space * self.len * self.dims..(space + 1) * self.len * self.dims]
    }
}

pub fn encode_dataset(projected: &ProjectedDataset, table: &BreakpointTable) -> Result<EncodedDataset> {
    ensure(
        projected.spaces() == table.spaces() && projected.dim() == table.dims(),
        "breakpoint table shape does not match the projected dataset",
    )?;
    let (spaces, n, dims) = (projected.spaces(), projected.len(), projected.dim());
    let mut symbols = vec![0u8; spaces * n * dims];
    for space in 0..spaces {
        for j in 0..dims {
            let row = table.row(space, j);
            for z in 0..n {
                symbols[(space * n + z) * dims + j] = locate_region(projected.point(space, z)[j], row) as u8;
            }
        }
    }
    Ok(EncodedDataset { spaces, len: n, dims, bits: table.symbol_bits(), symbols })
}
