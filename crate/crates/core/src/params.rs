use crate::chi2::{chi2_quantile, chi2_sf};
use crate::error::{ensure, Result};

/// Theory-driven quantities tying `K`, `c` and `L` together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedParams {
    pub alpha1: f64,
    pub alpha2: f64,
    /// Projected radius multiplier: a query radius `r` becomes `epsilon * r`.
    pub epsilon: f64,
    pub beta: f64,
}

/// `alpha1 = exp(-1/L)`, `epsilon^2 = chi2_{alpha1}(K) = c^2 chi2_{alpha2}(K)`,
/// `beta = 2 (1 - alpha2^L)`.
pub fn derive_params(hashes: usize, c: f64, trees: usize) -> Result<DerivedParams> {
    ensure(hashes >= 1, "K must be positive")?;
    ensure(trees >= 1, "L must be positive")?;
    ensure(c > 1.0, "approximation ratio c must exceed 1")?;
    let k = u32::try_from(hashes).map_err(|_| crate::Error::InvalidArgument("K too large"))?;
    let alpha1 = libm::exp(-1.0 / trees as f64);
    let eps_sq = chi2_quantile(alpha1, k)?;
    let alpha2 = chi2_sf(eps_sq / (c * c), k);
    let beta = 2.0 * (1.0 - libm::pow(alpha2, trees as f64));
    Ok(DerivedParams { alpha1, alpha2, epsilon: libm::sqrt(eps_sq), beta })
}

/// Every tunable of index construction and querying.
#[derive(Debug, Clone, PartialEq)]
pub struct LshParams {
    /// Projected dimension `K`.
    pub hashes: usize,
    /// Number of trees `L`.
    pub trees: usize,
    /// Approximation ratio `c > 1`.
    pub c: f64,
    /// Candidate fraction: queries stop once `beta * n + k` candidates are gathered.
    pub beta: f64,
    pub epsilon: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Regions per projected dimension, a power of two no larger than 256.
    pub n_regions: usize,
    /// Fraction of the dataset sampled for breakpoint selection.
    pub sample_fraction: f64,
    /// Leaf capacity `max_size`.
    pub leaf_capacity: usize,
    /// Initial query radius; estimated at build time when `None`.
    pub r_min: Option<f64>,
    /// Result count used when estimating `r_min`.
    pub k: usize,
    pub seed: u64,
}

impl LshParams {
    /// Parameters with `alpha1`, `alpha2`, `epsilon` and `beta` all derived from `(K, c, L)`.
    pub fn derived(hashes: usize, trees: usize, c: f64) -> Result<Self> {
        let d = derive_params(hashes, c, trees)?;
        Ok(LshParams {
            hashes,
            trees,
            c,
            beta: d.beta,
            epsilon: d.epsilon,
            alpha1: d.alpha1,
            alpha2: d.alpha2,
            n_regions: 256,
            sample_fraction: 0.1,
            leaf_capacity: 128,
            r_min: None,
            k: 50,
            seed: 0x5EED,
        })
    }

    /// Default `K = 16, L = 4, c = 1.5` with the fixed `beta = 0.1` used for benchmarking.
    pub fn benchmark_profile() -> Self {
        LshParams { beta: 0.1, ..LshParams::default() }
    }

    /// Re-derives the theory-driven fields after `hashes`, `trees` or `c` changed,
    /// keeping `beta` if `keep_beta` is set.
    pub fn rederive(&mut self, keep_beta: bool) -> Result<()> {
        let d = derive_params(self.hashes, self.c, self.trees)?;
        self.alpha1 = d.alpha1;
        self.alpha2 = d.alpha2;
        self.epsilon = d.epsilon;
        if !keep_beta {
            self.beta = d.beta;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.hashes >= 1, "K must be positive")?;
        ensure(self.trees >= 1, "L must be positive")?;
        ensure(self.c > 1.0, "approximation ratio c must exceed 1")?;
        ensure(self.beta > 0.0 && self.beta.is_finite(), "beta must be positive")?;
        ensure(self.epsilon > 0.0 && self.epsilon.is_finite(), "epsilon must be positive")?;
        ensure(
            self.n_regions >= 2 && self.n_regions <= 256 && self.n_regions.is_power_of_two(),
            "region count must be a power of two in [2, 256]",
        )?;
        ensure(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0, "sample fraction must lie in (0, 1]")?;
        ensure(self.leaf_capacity >= 1, "leaf capacity must be positive")?;
        ensure(self.k >= 1, "k must be positive")?;
        if let Some(r) = self.r_min {
            ensure(r > 0.0 && r.is_finite(), "r_min must be positive")?;
        }
        Ok(())
    }
}

impl Default for LshParams {
    fn default() -> Self {
        LshParams::derived(16, 4, 1.5).expect("default parameters are valid")
    }
}
