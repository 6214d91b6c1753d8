//! Exact k-nearest neighbors by linear scan, with an optional on-disk cache.

use std::hash::Hasher;
use std::path::{Path, PathBuf};

use det_lsh_core::{squared_distance, Dataset};
use fnv::FnvHasher;
use rayon::prelude::*;

use crate::error::{HarnessError, Result};
use crate::fingerprint::dataset_fingerprint;
use crate::vecs::{read_ivecs, write_ivecs};

/// Per query, the `k` nearest positions ascending by distance.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    k: usize,
    positions: Vec<u32>,
    distances: Vec<f64>,
}

impl GroundTruth {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn queries(&self) -> usize {
        self.positions.len() / self.k
    }

    pub fn positions(&self, query: usize) -> &[u32] {
        &self.positions[query * self.k..(query + 1) * self.k]
    }

    pub fn distances(&self, query: usize) -> &[f64] {
        &self.distances[query * self.k..(query + 1) * self.k]
    }

    /// Rebuilds distances for known neighbor positions.
    pub fn from_positions(data: &Dataset, queries: &Dataset, k: usize, positions: Vec<u32>) -> Result<Self> {
        check_shapes(data, queries, k)?;
        if positions.len() != queries.len() * k || positions.iter().any(|&p| p as usize >= data.len()) {
            return Err(HarnessError::Format("ground truth does not match the dataset and queries".into()));
        }
        let distances = positions
            .chunks_exact(k)
            .enumerate()
            .flat_map(|(qi, row)| row.iter().map(move |&p| (qi, p)))
            .map(|(qi, p)| squared_distance(queries.row(qi), data.row(p as usize)).sqrt())
            .collect();
        Ok(GroundTruth { k, positions, distances })
    }

    pub fn positions_as_i32(&self) -> Vec<i32> {
        self.positions.iter().map(|&p| p as i32).collect()
    }
}

fn check_shapes(data: &Dataset, queries: &Dataset, k: usize) -> Result<()> {
    if k == 0 || k > data.len() {
        return Err(HarnessError::InvalidArgument(format!("k = {k} must lie in 1..={}", data.len())));
    }
    if queries.dim() != data.dim() {
        return Err(HarnessError::InvalidArgument(format!(
            "queries have dimension {}, dataset {}",
            queries.dim(),
            data.dim()
        )));
    }
    Ok(())
}

/// The exact `k` nearest neighbors of `q`, ties broken by position.
pub fn exact_knn(data: &Dataset, q: &[f32], k: usize) -> Vec<(u32, f64)> {
    let mut all: Vec<(f64, u32)> =
        data.rows().enumerate().map(|(i, row)| (squared_distance(q, row), i as u32)).collect();
    let order = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < all.len() {
        all.select_nth_unstable_by(k, order);
        all.truncate(k);
    }
    all.sort_unstable_by(order);
    all.into_iter().map(|(d, p)| (p, d.sqrt())).collect()
}

/// Exact top-`k` for every query, parallel over queries.
pub fn brute_force_knn(data: &Dataset, queries: &Dataset, k: usize) -> Result<GroundTruth> {
    check_shapes(data, queries, k)?;
    let rows: Vec<Vec<(u32, f64)>> =
        (0..queries.len()).into_par_iter().map(|i| exact_knn(data, queries.row(i), k)).collect();
    let positions = rows.iter().flatten().map(|&(p, _)| p).collect();
    let distances = rows.iter().flatten().map(|&(_, d)| d).collect();
    Ok(GroundTruth { k, positions, distances })
}

/// Sidecar file name keyed by dataset and query fingerprints and `k`.
pub fn cache_path(dir: &Path, data: &Dataset, queries: &Dataset, k: usize) -> PathBuf {
    let mut h = FnvHasher::default();
    h.write_u64(dataset_fingerprint(data));
    h.write_u64(dataset_fingerprint(queries));
    dir.join(format!("gt-{:016x}-{:016x}-k{k}.ivecs", dataset_fingerprint(data), h.finish()))
}

/// Reads cached ground truth from `dir` if present and valid, otherwise
/// computes it and writes the cache.
pub fn cached_brute_force_knn(dir: &Path, data: &Dataset, queries: &Dataset, k: usize) -> Result<GroundTruth> {
    let path = cache_path(dir, data, queries, k);
    if path.exists() {
        let stored = read_ivecs(&path)?;
        if stored.dim == k && stored.len() == queries.len() && stored.values.iter().all(|&p| p >= 0) {
            let positions = stored.values.iter().map(|&p| p as u32).collect();
            if let Ok(gt) = GroundTruth::from_positions(data, queries, k, positions) {
                return Ok(gt);
            }
        }
    }
    let gt = brute_force_knn(data, queries, k)?;
    write_ivecs(&path, k, &gt.positions_as_i32())?;
    Ok(gt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_example() {
        let data = Dataset::new(1, vec![0.0, 1.0, 3.0]).unwrap();
        let queries = Dataset::new(1, vec![0.4]).unwrap();
        let gt = brute_force_knn(&data, &queries, 2).unwrap();
        assert_eq!(gt.positions(0), &[0, 1]);
        assert!((gt.distances(0)[0] - 0.4).abs() < 1e-6 && (gt.distances(0)[1] - 0.6).abs() < 1e-6);
        let all = brute_force_knn(&data, &queries, 3).unwrap();
        assert_eq!(all.positions(0), &[0, 1, 2]);
        assert!(brute_force_knn(&data, &queries, 4).is_err());
    }

    #[test]
    fn ties_go_to_lower_position() {
        let data = Dataset::new(1, vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let queries = Dataset::new(1, vec![0.0]).unwrap();
        assert_eq!(brute_force_knn(&data, &queries, 3).unwrap().positions(0), &[0, 1, 2]);
    }

    #[test]
    fn cache_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let data = Dataset::new(2, (0..40).map(|i| (i * 7 % 13) as f32).collect()).unwrap();
        let queries = Dataset::new(2, vec![0.5, 0.5, 3.0, 9.0]).unwrap();
        let fresh = cached_brute_force_knn(dir.path(), &data, &queries, 4).unwrap();
        assert!(cache_path(dir.path(), &data, &queries, 4).exists());
        let cached = cached_brute_force_knn(dir.path(), &data, &queries, 4).unwrap();
        assert_eq!(fresh, cached);
        assert_ne!(cache_path(dir.path(), &data, &queries, 4), cache_path(dir.path(), &data, &queries, 5));
    }
}
