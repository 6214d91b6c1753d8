//! Benchmark orchestration: build each method, time queries, and score them
//! against exact neighbors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use det_lsh_core::Dataset;
use det_lsh_core::{DetIndex, LshParams, QueryOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{io_error, HarnessError, Result};
use crate::ground_truth::{brute_force_knn, cached_brute_force_knn, exact_knn, GroundTruth};
use crate::metrics::{overall_ratio, recall};
use crate::synthetic::{gaussian_mixture, holdout, MixtureSpec};
use crate::vecs::read_dataset;

pub const CSV_HEADER: &str = "method,n,d,k,indexing_s,query_ms,recall,ratio,index_bytes";
pub const SWEEP_CSV_HEADER: &str = "method,beta,query_ms,recall,ratio";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    File(PathBuf),
    Synthetic(MixtureSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuerySource {
    File(PathBuf),
    /// Remove `count` random dataset points and use them as queries.
    Holdout {
        count: usize,
        #[serde(default)]
        seed: u64,
    },
}

impl Default for QuerySource {
    fn default() -> Self {
        QuerySource::Holdout { count: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    DetLsh,
    DetOnly,
    BruteForce,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::DetLsh => "det-lsh",
            Method::DetOnly => "det-only",
            Method::BruteForce => "brute-force",
        }
    }
}

/// Optional replacements for the benchmark parameter profile.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    #[serde(rename = "K")]
    pub hashes: Option<usize>,
    #[serde(rename = "L")]
    pub trees: Option<usize>,
    pub c: Option<f64>,
    pub beta: Option<f64>,
    pub regions: Option<usize>,
    pub leaf: Option<usize>,
    pub sample: Option<f64>,
    pub seed: Option<u64>,
    pub r_min: Option<f64>,
}

impl ParamOverrides {
    /// Starts from `K = 16, L = 4, c = 1.5, beta = 0.1` and applies the
    /// overrides; derived quantities follow `K`, `L` and `c`.
    pub fn resolve(&self, k: usize) -> Result<LshParams> {
        let mut p = LshParams::benchmark_profile();
        p.hashes = self.hashes.unwrap_or(p.hashes);
        p.trees = self.trees.unwrap_or(p.trees);
        p.c = self.c.unwrap_or(p.c);
        p.rederive(true)?;
        p.beta = self.beta.unwrap_or(p.beta);
        p.n_regions = self.regions.unwrap_or(p.n_regions);
        p.leaf_capacity = self.leaf.unwrap_or(p.leaf_capacity);
        p.sample_fraction = self.sample.unwrap_or(p.sample_fraction);
        p.seed = self.seed.unwrap_or(p.seed);
        p.r_min = self.r_min.or(p.r_min);
        p.k = k;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub queries: QuerySource,
    pub k: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub params: ParamOverrides,
    /// Extra query passes at these `beta` values (recall versus time).
    #[serde(default)]
    pub beta_sweep: Vec<f64>,
    /// Spread queries over threads instead of running them one at a time.
    #[serde(default)]
    pub parallel: bool,
    /// Directory for cached ground truth.
    #[serde(default)]
    pub gt_cache_dir: Option<PathBuf>,
}

fn default_methods() -> Vec<Method> {
    vec![Method::DetLsh, Method::DetOnly, Method::BruteForce]
}

impl BenchConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_error(path))?;
        let mut config = Self::from_json(&text)?;
        // Relative paths are taken from the config file's directory.
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DatasetSource::File(p) = &mut config.dataset {
            resolve(p);
        }
        if let QuerySource::File(p) = &mut config.queries {
            resolve(p);
        }
        if let Some(p) = &mut config.gt_cache_dir {
            resolve(p);
        }
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: Method,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub indexing_s: f64,
    /// Mean milliseconds per query.
    pub query_ms: f64,
    pub recall: f64,
    pub ratio: f64,
    pub index_bytes: usize,
    /// Ratio terms left out because the exact distance was zero.
    pub excluded_ratio_terms: usize,
    pub params: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub method: Method,
    pub beta: f64,
    pub query_ms: f64,
    pub recall: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub sweep: Vec<SweepPoint>,
}

impl BenchReport {
    pub fn row(&self, method: Method) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{}",
                r.method.name(),
                r.n,
                r.d,
                r.k,
                r.indexing_s,
                r.query_ms,
                r.recall,
                r.ratio,
                r.index_bytes
            );
        }
        out
    }

    pub fn sweep_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for p in &self.sweep {
            let _ = writeln!(out, "{},{},{:.6},{:.6},{:.6}", p.method.name(), p.beta, p.query_ms, p.recall, p.ratio);
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<12} {:>9} {:>5} {:>4} {:>11} {:>10} {:>8} {:>8} {:>12}\n",
            "method", "n", "d", "k", "index (s)", "query (ms)", "recall", "ratio", "index bytes"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<12} {:>9} {:>5} {:>4} {:>11.3} {:>10.3} {:>8.4} {:>8.4} {:>12}",
                r.method.name(),
                r.n,
                r.d,
                r.k,
                r.indexing_s,
                r.query_ms,
                r.recall,
                r.ratio,
                r.index_bytes
            );
        }
        if let Some(r) = self.rows.iter().find(|r| r.excluded_ratio_terms > 0) {
            let _ =
                writeln!(out, "note: {} ratio terms with zero exact distance were excluded", r.excluded_ratio_terms);
        }
        if !self.sweep.is_empty() {
            let _ =
                writeln!(out, "\n{:<12} {:>8} {:>10} {:>8} {:>8}", "method", "beta", "query (ms)", "recall", "ratio");
            for p in &self.sweep {
                let _ = writeln!(
                    out,
                    "{:<12} {:>8} {:>10.3} {:>8.4} {:>8.4}",
                    p.method.name(),
                    p.beta,
                    p.query_ms,
                    p.recall,
                    p.ratio
                );
            }
        }
        out
    }
}

/// Loads the dataset and queries a config describes.
pub fn load_inputs(config: &BenchConfig) -> Result<(Dataset, Dataset)> {
    let data = match &config.dataset {
        DatasetSource::File(path) => read_dataset(path)?,
        DatasetSource::Synthetic(spec) => gaussian_mixture(spec)?,
    };
    match &config.queries {
        QuerySource::File(path) => {
            let queries = read_dataset(path)?;
            if queries.dim() != data.dim() {
                return Err(HarnessError::InvalidArgument(format!(
                    "queries have dimension {}, dataset {}",
                    queries.dim(),
                    data.dim()
                )));
            }
            Ok((data, queries))
        }
        QuerySource::Holdout { count, seed } => holdout(&data, *count, *seed),
    }
}

pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport> {
    let (data, queries) = load_inputs(config)?;
    if config.k == 0 || config.k > data.len() {
        return Err(HarnessError::InvalidArgument(format!("k = {} must lie in 1..={}", config.k, data.len())));
    }
    let truth = match &config.gt_cache_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(io_error(dir))?;
            cached_brute_force_knn(dir, &data, &queries, config.k)?
        }
        None => brute_force_knn(&data, &queries, config.k)?,
    };
    benchmark(data, &queries, &truth, config)
}

struct Scored {
    query_ms: f64,
    recall: f64,
    ratio: f64,
    excluded: usize,
}

fn score(results: &[(Vec<u32>, Vec<f64>)], truth: &GroundTruth, k: usize, elapsed_s: f64) -> Scored {
    let mut recall_sum = 0.0;
    let mut ratio_sum = 0.0;
    let mut ratio_count = 0usize;
    let mut excluded = 0;
    for (qi, (positions, distances)) in results.iter().enumerate() {
        recall_sum += recall(positions, truth.positions(qi), k);
        let r = overall_ratio(distances, truth.distances(qi));
        excluded += r.excluded;
        if let Some(v) = r.value {
            ratio_sum += v;
            ratio_count += 1;
        }
    }
    let nq = results.len().max(1) as f64;
    Scored {
        query_ms: elapsed_s * 1e3 / nq,
        recall: recall_sum / nq,
        ratio: if ratio_count > 0 { ratio_sum / ratio_count as f64 } else { 1.0 },
        excluded,
    }
}

/// Positions and distances returned for one query.
type Answer = (Vec<u32>, Vec<f64>);

fn run_queries(
    index: &DetIndex,
    queries: &Dataset,
    k: usize,
    options: &QueryOptions,
    parallel: bool,
) -> Result<(Vec<Answer>, f64)> {
    let one = |i: usize| {
        index
            .ck_ann_with(queries.row(i), k, options)
            .map(|r| (r.hits.iter().map(|h| h.position).collect(), r.hits.iter().map(|h| h.distance).collect()))
    };
    let start = Instant::now();
    let results: det_lsh_core::Result<Vec<_>> = if parallel {
        (0..queries.len()).into_par_iter().map(one).collect()
    } else {
        (0..queries.len()).map(one).collect()
    };
    let elapsed = start.elapsed().as_secs_f64();
    Ok((results?, elapsed))
}

fn describe(p: &LshParams, r_min: f64) -> String {
    format!(
        "K={} L={} c={} beta={} eps={:.4} regions={} leaf={} sample={} seed={} r_min={:.4}",
        p.hashes, p.trees, p.c, p.beta, p.epsilon, p.n_regions, p.leaf_capacity, p.sample_fraction, p.seed, r_min
    )
}

/// Runs every configured method on prepared inputs.
pub fn benchmark(data: Dataset, queries: &Dataset, truth: &GroundTruth, config: &BenchConfig) -> Result<BenchReport> {
    let k = config.k;
    let params = config.params.resolve(k)?;
    let (n, d) = (data.len(), data.dim());
    let mut rows = Vec::new();
    let mut sweep = Vec::new();
    for &method in &config.methods {
        let row = |indexing_s: f64, s: &Scored, index_bytes: usize, params: String| BenchRow {
            method,
            n,
            d,
            k,
            indexing_s,
            query_ms: s.query_ms,
            recall: s.recall,
            ratio: s.ratio,
            index_bytes,
            excluded_ratio_terms: s.excluded,
            params,
        };
        match method {
            Method::BruteForce => {
                let start = Instant::now();
                let results: Vec<(Vec<u32>, Vec<f64>)> =
                    (0..queries.len()).map(|i| exact_knn(&data, queries.row(i), k).into_iter().unzip()).collect();
                let s = score(&results, truth, k, start.elapsed().as_secs_f64());
                rows.push(row(0.0, &s, 0, String::new()));
            }
            Method::DetLsh | Method::DetOnly => {
                let start = Instant::now();
                let index = if method == Method::DetLsh {
                    DetIndex::build(data.clone(), &params)?
                } else {
                    DetIndex::build_det_only(data.clone(), &params)?
                };
                let indexing_s = start.elapsed().as_secs_f64();
                let (results, elapsed) = run_queries(&index, queries, k, &QueryOptions::default(), config.parallel)?;
                let s = score(&results, truth, k, elapsed);
                rows.push(row(indexing_s, &s, index.index_bytes(), describe(index.params(), index.r_min())));
                for &beta in &config.beta_sweep {
                    let options = QueryOptions { beta: Some(beta), ..QueryOptions::default() };
                    let (results, elapsed) = run_queries(&index, queries, k, &options, config.parallel)?;
                    let s = score(&results, truth, k, elapsed);
                    sweep.push(SweepPoint { method, beta, query_ms: s.query_ms, recall: s.recall, ratio: s.ratio });
                }
            }
        }
    }
    Ok(BenchReport { rows, sweep })
}
