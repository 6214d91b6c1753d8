//! Seeded synthetic data and held-out query sets.

use det_lsh_core::Dataset;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Isotropic Gaussian clusters around Gaussian-distributed centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub n: usize,
    pub d: usize,
    #[serde(default = "default_clusters")]
    pub clusters: usize,
    /// Standard deviation of cluster centers per coordinate.
    #[serde(default = "default_center_spread")]
    pub center_spread: f64,
    /// Mean within-cluster standard deviation; each cluster draws its own
    /// from `[0.5, 1.5]` times this.
    #[serde(default = "default_cluster_std")]
    pub cluster_std: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_clusters() -> usize {
    100
}

fn default_center_spread() -> f64 {
    2.0
}

fn default_cluster_std() -> f64 {
    1.0
}

impl MixtureSpec {
    pub fn new(n: usize, d: usize, seed: u64) -> Self {
        MixtureSpec {
            n,
            d,
            clusters: default_clusters(),
            center_spread: default_center_spread(),
            cluster_std: default_cluster_std(),
            seed,
        }
    }
}

pub fn gaussian_mixture(mixture: &MixtureSpec) -> Result<Dataset> {
    if mixture.n == 0 || mixture.d == 0 || mixture.clusters == 0 {
        return Err(HarnessError::InvalidArgument("n, d and clusters must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mixture.seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let centers: Vec<f64> =
        (0..mixture.clusters * mixture.d).map(|_| normal(&mut rng) * mixture.center_spread).collect();
    let stds: Vec<f64> = (0..mixture.clusters).map(|_| mixture.cluster_std * rng.random_range(0.5..1.5)).collect();
    let mut values = Vec::with_capacity(mixture.n * mixture.d);
    for _ in 0..mixture.n {
        let c = rng.random_range(0..mixture.clusters);
        let center = &centers[c * mixture.d..(c + 1) * mixture.d];
        values.extend(center.iter().map(|&m| (m + stds[c] * normal(&mut rng)) as f32));
    }
    Ok(Dataset::new(mixture.d, values)?)
}

/// Removes `count` seeded random points from `data`; returns
/// `(remaining, removed)`, both in original order.
pub fn holdout(data: &Dataset, count: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if count == 0 || count >= data.len() {
        return Err(HarnessError::InvalidArgument(format!("holdout of {count} needs 1..{} points", data.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut removed = vec![false; data.len()];
    for i in sample_indices(&mut rng, data.len(), count) {
        removed[i] = true;
    }
    let mut kept = Vec::with_capacity((data.len() - count) * data.dim());
    let mut queries = Vec::with_capacity(count * data.dim());
    for (row, &gone) in data.rows().zip(&removed) {
        if gone { &mut queries } else { &mut kept }.extend_from_slice(row);
    }
    Ok((Dataset::new(data.dim(), kept)?, Dataset::new(data.dim(), queries)?))
}
