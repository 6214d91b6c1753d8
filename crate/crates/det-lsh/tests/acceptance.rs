//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any fails. Pass criterion numbers as
//! arguments to run a subset.

use std::collections::BTreeSet;
use std::ops::ControlFlow;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use det_lsh::bench::{run_benchmark, BenchConfig, Method};
use det_lsh::error::HarnessError;
use det_lsh::ground_truth::brute_force_knn;
use det_lsh::persist::{index_from_bytes, index_to_bytes, load_index, save_index};
use det_lsh::synthetic::{gaussian_mixture, holdout, MixtureSpec};
use det_lsh_core::chi2::chi2_quantile;
use det_lsh_core::encoder::{breakpoints_by_sorting, breakpoints_from_sample};
use det_lsh_core::{
    build_tree, derive_params, encode_dataset, select_breakpoints, BreakpointTable, Dataset, DeTree, DetIndex,
    HashFamily, LshParams, ProjectedDataset,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gaussian(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Dataset {
    Dataset::new(d, (0..n * d).map(|_| StandardNormal.sample(rng)).collect()).unwrap()
}

fn chi2_oracle(k: u32) -> ChiSquared {
    ChiSquared::new(f64::from(k)).unwrap()
}

fn c1_chi2() -> Outcome {
    let mut worst = 0.0f64;
    for k in [1u32, 2, 8, 16, 32] {
        let oracle = chi2_oracle(k);
        for i in 1..=99 {
            let alpha = f64::from(i) / 100.0;
            let x = chi2_quantile(alpha, k).map_err(|e| e.to_string())?;
            worst = worst.max((oracle.sf(x) - alpha).abs());
        }
    }
    let mut worst_k2 = 0.0f64;
    for i in 1..=99 {
        let alpha = f64::from(i) / 100.0;
        let x = chi2_quantile(alpha, 2).unwrap();
        let exact = -2.0 * alpha.ln();
        worst_k2 = worst_k2.max((x - exact).abs() / exact.max(1.0));
    }
    check(
        worst <= 1e-7 && worst_k2 <= 1e-9,
        format!("max |sf(q) - alpha| = {worst:.2e}, K=2 vs -2 ln alpha = {worst_k2:.2e}"),
    )
}

/// Squared original and projected distances for a fresh family per pair.
fn projected_ratio(d: usize, k: usize, seed: u64, rng: &mut ChaCha8Rng) -> f64 {
    let a: Vec<f32> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let b: Vec<f32> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let family = HashFamily::sample(d, k, 1, seed).unwrap();
    let pa = family.project_point(&a, 0).unwrap();
    let pb = family.project_point(&b, 0).unwrap();
    let s2: f64 = a.iter().zip(&b).map(|(x, y)| (f64::from(*x) - f64::from(*y)).powi(2)).sum();
    let sp2: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y).powi(2)).sum();
    sp2 / s2
}

fn c2_projection_ratio() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 10_000;
    let mut ratios: Vec<f64> = (0..n).map(|i| projected_ratio(32, 16, 1_000_000 + i as u64, &mut rng)).collect();
    ratios.sort_by(f64::total_cmp);
    let oracle = chi2_oracle(16);
    let ks = ratios
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = oracle.cdf(x);
            (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    let critical = 1.628 / (n as f64).sqrt();

    let trials = 100_000;
    let alphas = [0.1, 0.5, 0.9];
    let thresholds: Vec<f64> = alphas.iter().map(|&a| chi2_quantile(a, 16).unwrap()).collect();
    let mut exceed = [0usize; 3];
    for t in 0..trials {
        let r = projected_ratio(8, 16, 5_000_000 + t as u64, &mut rng);
        for (e, &q) in exceed.iter_mut().zip(&thresholds) {
            // s' > s * sqrt(q)  <=>  s'^2 / s^2 > q
            *e += usize::from(r > q);
        }
    }
    let freqs: Vec<f64> = exceed.iter().map(|&e| e as f64 / trials as f64).collect();
    let freq_ok = freqs.iter().zip(&alphas).all(|(f, a)| (f - a).abs() <= 0.02);
    check(
        ks < critical && freq_ok,
        format!("K-S D = {ks:.4} (critical {critical:.4}); exceedance {freqs:.4?} for alpha {alphas:?}"),
    )
}

fn c3_params() -> Outcome {
    let oracle = chi2_oracle(16);
    let mut worst = 0.0f64;
    let mut betas = Vec::new();
    for l in 1..=10 {
        let p = derive_params(16, 1.5, l).map_err(|e| e.to_string())?;
        let eps2 = p.epsilon * p.epsilon;
        worst = worst
            .max((p.alpha1 - (-1.0 / l as f64).exp()).abs())
            .max((oracle.sf(eps2) - p.alpha1).abs())
            .max((oracle.sf(eps2 / 2.25) - p.alpha2).abs())
            .max((p.beta - 2.0 * (1.0 - p.alpha2.powi(l as i32))).abs());
        betas.push(p.beta);
    }
    let decreasing = betas.windows(2).all(|w| w[1] < w[0]);
    check(worst <= 1e-8 && decreasing, format!("max residual {worst:.2e}; beta(L=1..10) = {:.4?}", betas))
}

fn c4_breakpoints() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..100 {
        let n_s = rng.random_range(256..=100_000);
        let n_regions = 1usize << rng.random_range(1..=8);
        let sample: Vec<f64> = match trial % 3 {
            0 => (0..n_s).map(|_| StandardNormal.sample(&mut rng)).collect(),
            1 => (0..n_s).map(|_| f64::from(rng.random_range(-20i32..20))).collect(),
            _ => (0..n_s).map(|_| rng.random::<f64>().powi(5) * 1e3).collect(),
        };
        let got = breakpoints_from_sample(&mut sample.clone(), n_regions, &mut rng);
        if got != breakpoints_by_sorting(&sample, n_regions) {
            return Err(format!("trial {trial}: n_s = {n_s}, N_r = {n_regions} differs from the sort oracle"));
        }
    }
    let big: Vec<f64> = (0..1_000_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut best_select = Duration::MAX;
    let mut best_sort = Duration::MAX;
    for _ in 0..5 {
        let start = Instant::now();
        let mut copy = big.clone();
        let a = breakpoints_from_sample(&mut copy, 256, &mut rng);
        best_select = best_select.min(start.elapsed());
        let start = Instant::now();
        let b = breakpoints_by_sorting(&big, 256);
        best_sort = best_sort.min(start.elapsed());
        assert_eq!(a, b);
    }
    let speedup = best_sort.as_secs_f64() / best_select.as_secs_f64();
    check(
        speedup >= 1.5,
        format!("100 samples match the sort oracle; n_s = 1e6: select {best_select:?}, sort {best_sort:?}, speedup {speedup:.2}x"),
    )
}

struct TreeFixture {
    projected: ProjectedDataset,
    table: BreakpointTable,
    tree: DeTree,
    queries: Vec<Vec<f64>>,
}

/// 1e4 Gaussian points in d = 64 projected to K = 16, one tree, plus
/// projected query points.
fn tree_fixture(seed: u64) -> TreeFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = gaussian(10_000, 64, &mut rng);
    let family = HashFamily::sample(64, 16, 1, seed).unwrap();
    let projected = family.project_dataset(&data).unwrap();
    let table = select_breakpoints(&projected, 256, 0.1, seed).unwrap();
    let encoded = encode_dataset(&projected, &table).unwrap();
    let tree = build_tree(&encoded, 0, 128).unwrap();
    let queries = (0..100)
        .map(|_| {
            let q: Vec<f32> = (0..64).map(|_| StandardNormal.sample(&mut rng)).collect();
            family.project_point(&q, 0).unwrap()
        })
        .collect();
    TreeFixture { projected, table, tree, queries }
}

fn projected_distance(f: &TreeFixture, q: &[f64], pos: u32) -> f64 {
    q.iter().zip(f.projected.point(0, pos as usize)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

fn exact_range(f: &TreeFixture, q: &[f64], radius: f64) -> Vec<u32> {
    let mut got = f
        .tree
        .range_query_exact(&f.table, q, radius, |pos, out| out.copy_from_slice(f.projected.point(0, pos as usize)));
    got.sort_unstable();
    got
}

fn c5_exact_range(f: &TreeFixture) -> Outcome {
    let mut total = 0usize;
    for (qi, q) in f.queries.iter().enumerate() {
        let mut dists: Vec<f64> = (0..f.projected.len() as u32).map(|p| projected_distance(f, q, p)).collect();
        dists.sort_by(f64::total_cmp);
        for quantile in [0.001, 0.01, 0.05] {
            // Midway between two neighbouring distances so no point sits on the boundary.
            let i = (quantile * dists.len() as f64) as usize;
            let radius = 0.5 * (dists[i] + dists[i + 1]);
            let scan: Vec<u32> =
                (0..f.projected.len() as u32).filter(|&p| projected_distance(f, q, p) <= radius).collect();
            let got = exact_range(f, q, radius);
            if got != scan {
                return Err(format!("query {qi}, radius {radius}: {} vs {} points", got.len(), scan.len()));
            }
            total += got.len();
        }
    }
    Ok(format!("300 range queries equal the linear scan ({total} points returned in total)"))
}

fn c6_bounds(f: &TreeFixture) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut finite_max = 0;
    for _ in 0..1000 {
        let q = &f.queries[rng.random_range(0..f.queries.len())];
        let id = rng.random_range(0..f.tree.node_count()) as u32;
        let node = f.tree.node(id);
        let lower = f.tree.mindist(q, id, &f.table);
        let dists: Vec<f64> = f.tree.subtree_positions(id).iter().map(|&p| projected_distance(f, q, p)).collect();
        let nearest = dists.iter().copied().fold(f64::INFINITY, f64::min);
        if lower > nearest + 1e-9 {
            return Err(format!("node {id}: mindist {lower} above nearest member {nearest}"));
        }
        if node.is_leaf() {
            let upper = f.tree.maxdist(q, id, &f.table);
            let farthest = dists.iter().copied().fold(0.0, f64::max);
            if upper.is_finite() {
                finite_max += 1;
                if upper < farthest - 1e-9 {
                    return Err(format!("leaf {id}: maxdist {upper} below farthest member {farthest}"));
                }
            }
        }
        if let Some(children) = node.children() {
            for c in children {
                if f.tree.mindist(q, c, &f.table) < lower {
                    return Err(format!("child {c} of {id} has a smaller mindist"));
                }
            }
        }
    }
    Ok(format!("1000 (query, node) pairs sound; {finite_max} leaves with finite maxdist checked"))
}

fn c7_superset(f: &TreeFixture) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut emitted_total = 0;
    for trial in 0..100 {
        let q = &f.queries[trial % f.queries.len()];
        let radius = rng.random_range(0.5..6.0);
        let mut emitted = BTreeSet::new();
        let _ = f.tree.range_query_optimized(&f.table, q, radius, &mut |p: &[u32]| {
            emitted.extend(p.iter().copied());
            ControlFlow::Continue(())
        });
        let exact = exact_range(f, q, radius);
        if let Some(missing) = exact.iter().find(|p| !emitted.contains(p)) {
            return Err(format!("trial {trial}: position {missing} in the exact result was not emitted"));
        }
        emitted_total += emitted.len();
    }
    Ok(format!("100 full drains contain the exact results ({emitted_total} candidates emitted)"))
}

fn c8_planted_rc_ann() -> Outcome {
    let params = LshParams { k: 1, ..LshParams::default() };
    let (r, c) = (2.0, params.c);
    let (mut successes, mut instances) = (0, 0);
    for dataset in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + dataset);
        let (n, d, planted) = (2000, 32, 20);
        let background = gaussian(n, d, &mut rng);
        let mut values = background.into_vec();
        let mut queries = Vec::new();
        for i in 0..planted {
            let q: Vec<f32> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            let target = i * (n / planted);
            for j in 0..d {
                values[target * d + j] = (f64::from(q[j]) + r * dir[j] / norm) as f32;
            }
            queries.push(q);
        }
        let data = Dataset::new(d, values).unwrap();
        let index = DetIndex::build(data, &LshParams { seed: dataset, ..params.clone() }).unwrap();
        for q in &queries {
            instances += 1;
            if let Some(hit) = index.rc_ann(q, r, c).unwrap() {
                successes += usize::from(hit.distance <= c * r);
            }
        }
    }
    let freq = successes as f64 / instances as f64;
    check(
        freq >= 0.5 - (-1.0f64).exp(),
        format!("{successes}/{instances} planted instances answered within c*r ({freq:.3})"),
    )
}

fn c9_ck_ann_bound() -> Outcome {
    let mixture = MixtureSpec { n: 10_100, d: 64, clusters: 50, ..MixtureSpec::new(10_100, 64, 9) };
    let (data, queries) = holdout(&gaussian_mixture(&mixture).unwrap(), 100, 9).unwrap();
    let k = 10;
    let truth = brute_force_knn(&data, &queries, k).unwrap();
    let params = LshParams { k, ..LshParams::default() };
    let index = DetIndex::build(data, &params).unwrap();
    let c2 = params.c * params.c;
    let mut good = 0;
    for qi in 0..queries.len() {
        let result = index.ck_ann(queries.row(qi), k).unwrap();
        let ok = result.hits.len() == k
            && result.hits.iter().zip(truth.distances(qi)).all(|(h, &t)| h.distance <= c2 * t + 1e-9);
        good += usize::from(ok);
    }
    let frac = good as f64 / queries.len() as f64;
    check(
        frac >= 0.80 && frac >= 0.5 - (-1.0f64).exp(),
        format!("{good}/100 queries meet the c^2-k-ANN bound (beta = {:.4})", params.beta),
    )
}

fn c10_benchmark() -> Outcome {
    let config = BenchConfig::from_json(
        r#"{
            "dataset": {"synthetic": {"n": 100100, "d": 128, "seed": 10}},
            "queries": {"holdout": {"count": 100, "seed": 10}},
            "k": 50,
            "methods": ["det-lsh", "det-only", "brute-force"]
        }"#,
    )
    .unwrap();
    let report = run_benchmark(&config).map_err(|e| e.to_string())?;
    let lsh = report.row(Method::DetLsh).unwrap();
    let only = report.row(Method::DetOnly).unwrap();
    let brute = report.row(Method::BruteForce).unwrap();
    check(
        lsh.recall >= 0.85
            && lsh.ratio <= 1.01
            && only.recall <= lsh.recall + 0.05
            && brute.recall == 1.0
            && brute.ratio == 1.0,
        format!(
            "det-lsh recall {:.4} ratio {:.5} ({:.2} ms/query, built in {:.2} s); det-only recall {:.4}; brute force {:.2} ms/query",
            lsh.recall, lsh.ratio, lsh.query_ms, lsh.indexing_s, only.recall, brute.query_ms
        ),
    )
}

fn c11_scaling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let big = gaussian(200_000, 64, &mut rng);
    let small = Dataset::new(64, big.as_slice()[..100_000 * 64].to_vec()).unwrap();
    let params = LshParams::benchmark_profile();
    let time = |data: &Dataset| {
        (0..3)
            .map(|_| {
                let data = data.clone();
                let start = Instant::now();
                let index = DetIndex::build(data, &params).unwrap();
                let t = start.elapsed().as_secs_f64();
                drop(index);
                t
            })
            .fold(f64::INFINITY, f64::min)
    };
    let t1 = time(&small);
    let t2 = time(&big);
    let ratio = t2 / t1;
    check((1.6..=2.6).contains(&ratio), format!("build 1e5: {t1:.3} s, 2e5: {t2:.3} s, ratio {ratio:.2}"))
}

fn c12_persistence() -> Outcome {
    let mixture = MixtureSpec::new(20_000, 32, 12);
    let (data, queries) = holdout(&gaussian_mixture(&mixture).unwrap(), 100, 12).unwrap();
    let index = DetIndex::build(data.clone(), &LshParams { k: 10, ..LshParams::benchmark_profile() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("index.detl");
    save_index(&index, &path).unwrap();
    let loaded = load_index(&path, data.clone()).unwrap();
    for qi in 0..queries.len() {
        if index.ck_ann(queries.row(qi), 10).unwrap() != loaded.ck_ann(queries.row(qi), 10).unwrap() {
            return Err(format!("query {qi} differs after reload"));
        }
    }
    let bytes = index_to_bytes(&index);
    let mut bad_magic = bytes.clone();
    bad_magic[..4].copy_from_slice(b"NOPE");
    let mut bad_version = bytes.clone();
    bad_version[4] ^= 0xFF;
    let other = gaussian_mixture(&MixtureSpec::new(19_900, 32, 13)).unwrap();
    let errors = [
        matches!(index_from_bytes(&bad_magic, data.clone()), Err(HarnessError::BadMagic(_))),
        matches!(index_from_bytes(&bad_version, data.clone()), Err(HarnessError::Version { .. })),
        matches!(index_from_bytes(&bytes, other), Err(HarnessError::Fingerprint { .. })),
        matches!(index_from_bytes(&bytes[..bytes.len() / 3], data.clone()), Err(HarnessError::Truncated(_))),
        matches!(index_from_bytes(&bytes[..bytes.len() - 3], data), Err(HarnessError::Truncated(_))),
    ];
    check(
        errors.iter().all(|&e| e),
        format!("100 queries identical after reload; magic/version/fingerprint/truncation errors {errors:?}"),
    )
}

fn main() {
    let selected: BTreeSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: u32| selected.is_empty() || selected.contains(&n);
    let fixture = std::cell::OnceCell::new();
    let f = || fixture.get_or_init(|| tree_fixture(5));
    let mut failures = 0;

    type Criterion<'a> = (u32, &'a str, u64, Box<dyn FnMut() -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        (1, "chi-squared quantiles", 1, Box::new(c1_chi2)),
        (2, "projected distance ratio distribution", 30, Box::new(c2_projection_ratio)),
        (3, "derived parameters", 1, Box::new(c3_params)),
        (4, "breakpoint selection", 60, Box::new(c4_breakpoints)),
        (5, "exact range query", 60, Box::new(|| c5_exact_range(f()))),
        (6, "node distance bounds", 30, Box::new(|| c6_bounds(f()))),
        (7, "optimized range query superset", 30, Box::new(|| c7_superset(f()))),
        (8, "(r,c)-ANN success rate", 120, Box::new(c8_planted_rc_ann)),
        (9, "c^2-k-ANN guarantee", 120, Box::new(c9_ck_ann_bound)),
        (10, "end-to-end recall", 300, Box::new(c10_benchmark)),
        (11, "indexing time scaling", 180, Box::new(c11_scaling)),
        (12, "index persistence", 60, Box::new(c12_persistence)),
    ];
    for (n, name, limit_s, mut run) in criteria {
        if !wanted(n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(&mut run)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or(e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed.as_secs_f64() > limit_s as f64 => {
                Err(format!("{detail}; took {elapsed:.1?}, limit {limit_s} s"))
            }
            other => other,
        };
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail} [{elapsed:.2?}]"),
            Err(detail) => {
                failures += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail} [{elapsed:.2?}]");
            }
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
