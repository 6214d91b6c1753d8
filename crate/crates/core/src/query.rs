//! The assembled index and its query procedures: (r,c)-ANN, c²-k-ANN with a
//! geometric radius schedule, and estimation of the starting radius.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{squared_distance, squared_distance_f64, Dataset};
use crate::encoder::{encode_dataset, select_breakpoints, BreakpointTable};
use crate::error::{ensure, Error, Result};
use crate::params::LshParams;
use crate::projection::{HashFamily, ProjectedDataset, Projector};
use crate::tree::{build_tree, CandidateSink, DeTree, QueryBounds};

const BREAKPOINT_SEED_MIX: u64 = 0xB4EA_4B01_17D5_0000;
const PROBE_SEED_MIX: u64 = 0x00DD_BA11_5EED;
/// Data points used as probes when estimating `r_min` during build.
pub const BUILD_PROBES: usize = 10;
/// Points whose pairwise projected distances seed the `r_min` search.
const GUESS_SAMPLE: usize = 32;
/// Geometric steps allowed in either direction during `r_min` search.
const MAX_RADIUS_STEPS: usize = 200;

/// One returned neighbor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub position: u32,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    /// Ascending by distance, ties by position.
    pub hits: Vec<Hit>,
    /// Original-space radius of the last round.
    pub radius_used: f64,
    /// Distinct candidates whose exact distance was computed.
    pub candidates_seen: usize,
    pub rounds: usize,
}

/// Per-query overrides of index settings.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QueryOptions {
    pub r_min: Option<f64>,
    pub beta: Option<f64>,
}

/// Deduplicated candidates with exact distances computed on insertion.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    seen: Vec<u64>,
    members: Vec<Hit>,
}

impl CandidateSet {
    pub fn new(n: usize) -> Self {
        CandidateSet { seen: vec![0; n.div_ceil(64)], members: Vec::new() }
    }

    pub fn contains(&self, position: u32) -> bool {
        let p = position as usize;
        self.seen[p / 64] & (1 << (p % 64)) != 0
    }

    /// Adds `position` unless present; `distance` is only evaluated for new members.
    pub fn insert_with(&mut self, position: u32, distance: impl FnOnce() -> f64) -> bool {
        let p = position as usize;
        let word = &mut self.seen[p / 64];
        let bit = 1 << (p % 64);
        if *word & bit != 0 {
            return false;
        }
        *word |= bit;
        self.members.push(Hit { position, distance: distance() });
        true
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Hit] {
        &self.members
    }

    pub fn count_within(&self, radius: f64) -> usize {
        self.members.iter().filter(|h| h.distance <= radius).count()
    }

    pub fn closest(&self) -> Option<Hit> {
        self.members.iter().copied().min_by(hit_order)
    }

    /// The `k` closest members in ascending order, ties by position.
    pub fn top_k(&self, k: usize) -> Vec<Hit> {
        let mut hits = self.members.clone();
        if k < hits.len() {
            hits.select_nth_unstable_by(k, hit_order);
            hits.truncate(k);
        }
        hits.sort_unstable_by(hit_order);
        hits
    }
}

fn hit_order(a: &Hit, b: &Hit) -> core::cmp::Ordering {
    a.distance.total_cmp(&b.distance).then(a.position.cmp(&b.position))
}

/// Inserts every leaf position, stopping as soon as the budget is reached.
struct BudgetSink<'a> {
    data: &'a Dataset,
    query: &'a [f32],
    set: &'a mut CandidateSet,
    budget: usize,
}

impl CandidateSink for BudgetSink<'_> {
    fn accept_leaf(&mut self, positions: &[u32]) -> ControlFlow<()> {
        for &pos in positions {
            let (data, query) = (self.data, self.query);
            self.set.insert_with(pos, || libm::sqrt(squared_distance(query, data.row(pos as usize))));
            if self.set.len() >= self.budget {
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    }
}

/// The searchable index: projections, breakpoints, one tree per projected
/// space, and the original points for exact re-ranking.
#[derive(Debug, Clone)]
pub struct DetIndex {
    params: LshParams,
    projector: Projector,
    radius_scale: f64,
    table: BreakpointTable,
    trees: Vec<DeTree>,
    data: Dataset,
    r_min: f64,
}

impl DetIndex {
    /// Builds the LSH index with `params.trees` trees over `params.hashes`
    /// Gaussian projections each.
    pub fn build(data: Dataset, params: &LshParams) -> Result<Self> {
        params.validate()?;
        ensure(!data.is_empty(), "dataset is empty")?;
        let family = HashFamily::sample(data.dim(), params.hashes, params.trees, params.seed)?;
        Self::build_with(data, params.clone(), Projector::Lsh(family), params.epsilon)
    }

    /// Builds the tree-only baseline: PAA summaries with `params.hashes`
    /// segments and a single tree. The projected radius is scaled by
    /// `1 / sqrt(floor(d / K))`, under which PAA never drops a true neighbor.
    pub fn build_det_only(data: Dataset, params: &LshParams) -> Result<Self> {
        params.validate()?;
        ensure(!data.is_empty(), "dataset is empty")?;
        ensure(params.hashes <= data.dim(), "PAA segment count exceeds the dimension")?;
        let params = LshParams { trees: 1, ..params.clone() };
        let projector = Projector::Paa { dim: data.dim(), segments: params.hashes };
        let scale = Projector::paa_radius_scale(data.dim(), params.hashes);
        Self::build_with(data, params, projector, scale)
    }

    fn build_with(data: Dataset, params: LshParams, projector: Projector, radius_scale: f64) -> Result<Self> {
        let projected = projector.project_dataset(&data)?;
        let table = select_breakpoints(
            &projected,
            params.n_regions,
            params.sample_fraction,
            params.seed ^ BREAKPOINT_SEED_MIX,
        )?;
        let encoded = encode_dataset(&projected, &table)?;
        let trees = (0..projector.spaces())
            .map(|space| build_tree(&encoded, space, params.leaf_capacity))
            .collect::<Result<Vec<_>>>()?;
        let mut index = DetIndex { params, projector, radius_scale, table, trees, data, r_min: 1.0 };
        index.r_min = match index.params.r_min {
            Some(r) => r,
            None => {
                let n = index.data.len();
                let mut rng = ChaCha8Rng::seed_from_u64(index.params.seed ^ PROBE_SEED_MIX);
                let probes: Vec<u32> =
                    sample_indices(&mut rng, n, BUILD_PROBES.min(n)).iter().map(|p| p as u32).collect();
                let k = index.params.k.min(n);
                let lookup =
                    |space: usize, pos: u32, out: &mut [f64]| out.copy_from_slice(projected.point(space, pos as usize));
                let probe_points: Vec<&[f32]> = probes.iter().map(|&p| index.data.row(p as usize)).collect();
                index.estimate_rmin_with(&probe_points, k, Some(&projected), lookup)?
            }
        };
        Ok(index)
    }

    /// Reassembles an index from stored components, checking they agree.
    pub fn from_parts(
        params: LshParams,
        projector: Projector,
        table: BreakpointTable,
        trees: Vec<DeTree>,
        data: Dataset,
        r_min: f64,
    ) -> Result<Self> {
        params.validate()?;
        if projector.input_dim() != data.dim() {
            return Err(Error::DimensionMismatch { expected: projector.input_dim(), found: data.dim() });
        }
        let spaces = projector.spaces();
        let k = projector.output_dim();
        ensure(k == params.hashes, "projector output does not match K")?;
        ensure(spaces == params.trees, "projector spaces do not match L")?;
        ensure(table.spaces() == spaces && table.dims() == k, "breakpoint table shape mismatch")?;
        ensure(table.n_regions() == params.n_regions, "breakpoint table region count mismatch")?;
        ensure(trees.len() == spaces, "tree count does not match L")?;
        for (i, tree) in trees.iter().enumerate() {
            ensure(tree.space() == i && tree.dims() == k, "tree shape mismatch")?;
            ensure(tree.symbol_bits() == table.symbol_bits(), "tree symbol width mismatch")?;
            ensure(tree.len() == data.len(), "tree does not index every point")?;
            ensure(
                tree.nodes()
                    .iter()
                    .filter_map(|n| n.entries())
                    .all(|e| e.positions().iter().all(|&p| (p as usize) < data.len())),
                "tree position out of range",
            )?;
        }
        ensure(r_min > 0.0 && r_min.is_finite(), "r_min must be positive")?;
        let radius_scale = match &projector {
            Projector::Lsh(_) => params.epsilon,
            Projector::Paa { dim, segments } => Projector::paa_radius_scale(*dim, *segments),
        };
        Ok(DetIndex { params, projector, radius_scale, table, trees, data, r_min })
    }

    pub fn params(&self) -> &LshParams {
        &self.params
    }

    pub fn projector(&self) -> &Projector {
        &self.projector
    }

    pub fn is_det_only(&self) -> bool {
        matches!(self.projector, Projector::Paa { .. })
    }

    /// Factor mapping an original-space radius to the projected radius.
    pub fn radius_scale(&self) -> f64 {
        self.radius_scale
    }

    pub fn table(&self) -> &BreakpointTable {
        &self.table
    }

    pub fn trees(&self) -> &[DeTree] {
        &self.trees
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn set_r_min(&mut self, r_min: f64) -> Result<()> {
        ensure(r_min > 0.0 && r_min.is_finite(), "r_min must be positive")?;
        self.r_min = r_min;
        Ok(())
    }

    /// Approximate heap footprint of the index structures, excluding the
    /// original points.
    pub fn index_bytes(&self) -> usize {
        let family = match &self.projector {
            Projector::Lsh(f) => f.dim() * f.hashes() * f.spaces() * 8,
            Projector::Paa { .. } => 0,
        };
        family + self.table.as_slice().len() * 8 + self.trees.iter().map(DeTree::heap_bytes).sum::<usize>()
    }

    fn check_query(&self, q: &[f32]) -> Result<()> {
        if q.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: q.len() });
        }
        Ok(())
    }

    fn budget(&self, beta: f64, extra: usize) -> usize {
        let n = self.len();
        let raw = libm::ceil(beta * n as f64 + extra as f64);
        if raw >= n as f64 {
            n
        } else {
            raw as usize
        }
    }

    /// Projects `q` into every space and prepares its node-bound tables.
    fn prepare(&self, q: &[f32]) -> Vec<QueryBounds> {
        let mut qp = vec![0.0; self.params.hashes];
        (0..self.trees.len())
            .map(|space| {
                self.projector.project_into(q, space, &mut qp).expect("query dimension checked");
                QueryBounds::new(&qp, &self.table, space)
            })
            .collect()
    }

    /// Runs one optimized range query per tree at original radius `r`,
    /// feeding `set` until it holds `budget` points. `Break` means the budget
    /// tripped.
    fn gather(
        &self,
        q: &[f32],
        bounds: &[QueryBounds],
        r: f64,
        set: &mut CandidateSet,
        budget: usize,
    ) -> ControlFlow<()> {
        let mut sink = BudgetSink { data: &self.data, query: q, set, budget };
        if sink.set.len() >= budget {
            return ControlFlow::Break(());
        }
        for (tree, b) in self.trees.iter().zip(bounds) {
            tree.range_query_optimized_with(b, self.radius_scale * r, &mut sink)?;
        }
        ControlFlow::Continue(())
    }

    /// (r,c)-ANN: gathers candidates from every tree at radius `r`, stopping
    /// once `beta * n + 1` are held. On a budget stop the closest candidate
    /// is returned whatever its distance; otherwise only if within `c * r`.
    pub fn rc_ann(&self, q: &[f32], r: f64, c: f64) -> Result<Option<Hit>> {
        self.check_query(q)?;
        ensure(r > 0.0, "radius must be positive")?;
        ensure(c > 1.0, "approximation ratio c must exceed 1")?;
        let mut set = CandidateSet::new(self.len());
        let bounds = self.prepare(q);
        let budget = self.budget(self.params.beta, 1);
        if self.gather(q, &bounds, r, &mut set, budget).is_break() {
            return Ok(set.closest());
        }
        Ok(set.closest().filter(|h| h.distance <= c * r))
    }

    /// c²-k-ANN with the index's `r_min` and `beta`.
    pub fn ck_ann(&self, q: &[f32], k: usize) -> Result<QueryResult> {
        self.ck_ann_with(q, k, &QueryOptions::default())
    }

    /// c²-k-ANN: rounds at radii `r_min * c^t` until `beta * n + k`
    /// candidates are held, `k` candidates lie within `c * r`, or every
    /// point has been seen.
    pub fn ck_ann_with(&self, q: &[f32], k: usize, options: &QueryOptions) -> Result<QueryResult> {
        self.check_query(q)?;
        ensure(k >= 1, "k must be positive")?;
        ensure(k <= self.len(), "k exceeds the dataset size")?;
        let beta = options.beta.unwrap_or(self.params.beta);
        ensure(beta > 0.0 && beta.is_finite(), "beta must be positive")?;
        let mut r = options.r_min.unwrap_or(self.r_min);
        ensure(r > 0.0 && r.is_finite(), "r_min must be positive")?;
        let c = self.params.c;
        let budget = self.budget(beta, k);
        let mut set = CandidateSet::new(self.len());
        let bounds = self.prepare(q);
        let mut rounds = 0;
        loop {
            rounds += 1;
            let tripped = self.gather(q, &bounds, r, &mut set, budget).is_break();
            if tripped || set.count_within(c * r) >= k || set.len() == self.len() {
                return Ok(QueryResult { hits: set.top_k(k), radius_used: r, candidates_seen: set.len(), rounds });
            }
            r *= c;
        }
    }

    /// Distinct points within projected radius `radius_scale * r` of `q` in
    /// any space, using exact range queries.
    pub fn candidate_count(&self, q: &[f32], r: f64) -> Result<usize> {
        self.check_query(q)?;
        let lookup = |space: usize, pos: u32, out: &mut [f64]| {
            self.projector
                .project_into(self.data.row(pos as usize), space, out)
                .expect("dataset rows match the projector")
        };
        Ok(self.count_exact(&self.prepare(q), r, lookup))
    }

    fn count_exact<F>(&self, bounds: &[QueryBounds], r: f64, mut lookup: F) -> usize
    where
        F: FnMut(usize, u32, &mut [f64]),
    {
        let mut seen = CandidateSet::new(self.len());
        for (space, (tree, b)) in self.trees.iter().zip(bounds).enumerate() {
            for pos in tree.range_query_exact_with(b, self.radius_scale * r, |p, out| lookup(space, p, out)) {
                seen.insert_with(pos, || 0.0);
            }
        }
        seen.len()
    }

    /// The starting radius: per probe, the smallest radius on a geometric
    /// grid (ratio `c`) whose exact candidate count reaches `beta * n + k`
    /// while the next smaller grid radius falls short; median over probes.
    pub fn estimate_rmin<P: AsRef<[f32]>>(&self, probes: &[P], k: usize) -> Result<f64> {
        let points: Vec<&[f32]> = probes.iter().map(|p| p.as_ref()).collect();
        let lookup = |space: usize, pos: u32, out: &mut [f64]| {
            self.projector
                .project_into(self.data.row(pos as usize), space, out)
                .expect("dataset rows match the projector")
        };
        self.estimate_rmin_with(&points, k, None, lookup)
    }

    fn estimate_rmin_with<F>(
        &self,
        probes: &[&[f32]],
        k: usize,
        projected: Option<&ProjectedDataset>,
        mut lookup: F,
    ) -> Result<f64>
    where
        F: FnMut(usize, u32, &mut [f64]),
    {
        ensure(!probes.is_empty(), "at least one probe is required")?;
        ensure(k >= 1 && k <= self.len(), "k must lie in 1..=n")?;
        for p in probes {
            self.check_query(p)?;
        }
        let target = self.budget(self.params.beta, k);
        let start = self.initial_radius_guess(projected, &mut lookup);
        let mut radii = Vec::with_capacity(probes.len());
        for p in probes {
            let bounds = self.prepare(p);
            let count = |r: f64| self.count_exact(&bounds, r, &mut lookup);
            radii.push(magic_radius(count, start, self.params.c, target));
        }
        radii.sort_unstable_by(f64::total_cmp);
        let mid = radii.len() / 2;
        Ok(if radii.len() % 2 == 1 { radii[mid] } else { 0.5 * (radii[mid - 1] + radii[mid]) })
    }

    /// Median pairwise projected distance (space 0) over a small seeded
    /// sample, mapped back to an original-space radius.
    fn initial_radius_guess<F>(&self, projected: Option<&ProjectedDataset>, lookup: &mut F) -> f64
    where
        F: FnMut(usize, u32, &mut [f64]),
    {
        let n = self.len();
        let kk = self.params.hashes;
        let mut rng = ChaCha8Rng::seed_from_u64(self.params.seed ^ PROBE_SEED_MIX ^ 1);
        let picks = sample_indices(&mut rng, n, GUESS_SAMPLE.min(n));
        let mut points = vec![0.0; picks.len() * kk];
        for (pos, out) in picks.iter().zip(points.chunks_exact_mut(kk)) {
            match projected {
                Some(p) => out.copy_from_slice(p.point(0, pos)),
                None => lookup(0, pos as u32, out),
            }
        }
        let rows: Vec<&[f64]> = points.chunks_exact(kk).collect();
        let mut dists = Vec::new();
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                dists.push(libm::sqrt(squared_distance_f64(rows[i], rows[j])));
            }
        }
        if dists.is_empty() {
            return 1.0;
        }
        let mid = dists.len() / 2;
        let median = *dists.select_nth_unstable_by(mid, f64::total_cmp).1;
        let guess = median / self.radius_scale;
        if guess > 0.0 && guess.is_finite() {
            guess
        } else {
            1.0
        }
    }
}

/// Geometric search over the grid `start * c^t` for the smallest radius
/// whose `count` reaches `target` while the grid radius below it does not.
/// `count` must be non-decreasing in the radius. The search stops after a
/// bounded number of steps in either direction.
pub fn magic_radius<F: FnMut(f64) -> usize>(mut count: F, start: f64, c: f64, target: usize) -> f64 {
    let mut r = start;
    if count(r) >= target {
        for _ in 0..MAX_RADIUS_STEPS {
            let smaller = r / c;
            if smaller <= f64::MIN_POSITIVE || count(smaller) < target {
                break;
            }
            r = smaller;
        }
    } else {
        for _ in 0..MAX_RADIUS_STEPS {
            r *= c;
            if !r.is_finite() || count(r) >= target {
                break;
            }
        }
    }
    r
}

/// Builds the tree-only baseline over `data` and answers one c²-k-ANN query.
pub fn det_only_ck_ann(data: Dataset, q: &[f32], k: usize, params: &LshParams) -> Result<QueryResult> {
    DetIndex::build_det_only(data, params)?.ck_ann(q, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        Dataset::new(d, values).unwrap()
    }

    fn small_params() -> LshParams {
        LshParams { n_regions: 16, leaf_capacity: 8, k: 5, ..LshParams::default() }
    }

    fn brute_force(data: &Dataset, q: &[f32]) -> Vec<Hit> {
        let mut hits: Vec<Hit> = data
            .rows()
            .enumerate()
            .map(|(i, row)| Hit { position: i as u32, distance: libm::sqrt(squared_distance(q, row)) })
            .collect();
        hits.sort_by(hit_order);
        hits
    }

    #[test]
    fn candidate_set_dedups_and_orders() {
        let mut set = CandidateSet::new(10);
        assert!(set.insert_with(3, || 2.0));
        assert!(!set.insert_with(3, || panic!("distance recomputed")));
        assert!(set.insert_with(7, || 1.0));
        assert!(set.insert_with(1, || 2.0));
        assert!(set.contains(1) && !set.contains(2));
        assert_eq!(set.len(), 3);
        assert_eq!(set.count_within(1.5), 1);
        let top: Vec<u32> = set.top_k(2).iter().map(|h| h.position).collect();
        assert_eq!(top, vec![7, 1]);
        assert_eq!(set.closest().unwrap().position, 7);
    }

    #[test]
    fn full_k_returns_everything_sorted() {
        let data = gaussian(100, 8, 1);
        let index = DetIndex::build(data.clone(), &small_params()).unwrap();
        let q: Vec<f32> = (0..8).map(|i| i as f32 * 0.1).collect();
        let result = index.ck_ann(&q, 100).unwrap();
        assert_eq!(result.hits, brute_force(&data, &q));
    }

    #[test]
    fn planted_point_is_found() {
        let data = gaussian(2000, 16, 2);
        let index = DetIndex::build(data.clone(), &small_params()).unwrap();
        let q = data.row(1234).to_vec();
        let result = index.ck_ann(&q, 1).unwrap();
        assert_eq!(result.hits[0], Hit { position: 1234, distance: 0.0 });
        let hit = index.rc_ann(&q, 0.5, 1.5).unwrap().unwrap();
        assert_eq!(hit.distance, 0.0);
    }

    #[test]
    fn far_points_give_no_answer() {
        let d = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut values = Vec::new();
        for _ in 0..200 {
            let noise: Vec<f32> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            values.extend(noise.iter().enumerate().map(|(j, x)| x + if j == 0 { 1000.0 } else { 0.0 }));
        }
        let data = Dataset::new(d, values).unwrap();
        let params = LshParams { r_min: Some(1.0), leaf_capacity: 1000, ..small_params() };
        let index = DetIndex::build(data, &params).unwrap();
        let q = vec![0.0f32; d];
        let r = 1.0;
        // No leaf can be reached at this radius, so the candidate set stays empty.
        for (space, tree) in index.trees().iter().enumerate() {
            let qp = index.projector().project_point(&q, space).unwrap();
            for leaf in tree.leaves() {
                assert!(tree.mindist(&qp, leaf, index.table()) > index.radius_scale() * r);
            }
        }
        assert_eq!(index.rc_ann(&q, r, 1.5).unwrap(), None);
    }

    #[test]
    fn results_are_sorted_and_distances_exact() {
        let data = gaussian(3000, 16, 4);
        let index = DetIndex::build(data.clone(), &small_params()).unwrap();
        let q = gaussian(1, 16, 5).into_vec();
        let result = index.ck_ann(&q, 10).unwrap();
        assert_eq!(result.hits.len(), 10);
        assert!(result.hits.windows(2).all(|w| hit_order(&w[0], &w[1]).is_lt()));
        for h in &result.hits {
            assert!((h.distance - libm::sqrt(squared_distance(&q, data.row(h.position as usize)))).abs() < 1e-9);
        }
        let budget = libm::ceil(index.params().beta * 3000.0 + 10.0) as usize;
        assert!(result.candidates_seen <= budget);
        let expected_r = index.r_min() * libm::pow(index.params().c, (result.rounds - 1) as f64);
        assert!((result.radius_used - expected_r).abs() <= 1e-12 * expected_r);
    }

    #[test]
    fn options_override_budget_and_start() {
        let data = gaussian(3000, 16, 6);
        let index = DetIndex::build(data, &small_params()).unwrap();
        let q = gaussian(1, 16, 7).into_vec();
        let tight = index.ck_ann_with(&q, 5, &QueryOptions { r_min: Some(100.0), beta: Some(0.001) }).unwrap();
        assert_eq!(tight.rounds, 1);
        assert_eq!(tight.radius_used, 100.0);
        assert_eq!(tight.candidates_seen, 8);
    }

    #[test]
    fn query_errors() {
        let index = DetIndex::build(gaussian(100, 4, 8), &small_params()).unwrap();
        assert!(index.ck_ann(&[0.0; 4], 101).is_err());
        assert!(index.ck_ann(&[0.0; 4], 0).is_err());
        assert!(matches!(index.ck_ann(&[0.0; 3], 1), Err(Error::DimensionMismatch { expected: 4, found: 3 })));
        assert!(index.rc_ann(&[0.0; 4], 0.0, 1.5).is_err());
        assert!(index.estimate_rmin::<Vec<f32>>(&[], 5).is_err());
    }

    #[test]
    fn magic_radius_on_exact_grid() {
        let r0 = 0.75;
        let target = 40;
        let count = |r: f64| if r >= r0 { target } else { target - 1 };
        assert_eq!(magic_radius(count, r0 * 8.0, 2.0, target), r0);
        assert_eq!(magic_radius(count, r0 / 16.0, 2.0, target), r0);
        assert_eq!(magic_radius(count, r0, 2.0, target), r0);
    }

    #[test]
    fn magic_radius_is_bounded() {
        let r = magic_radius(|_| 0, 1.0, 2.0, 5);
        assert!(r > 1e50);
        let r = magic_radius(|_| 10, 1.0, 2.0, 5);
        assert!(r < 1e-50);
    }

    #[test]
    fn rmin_brackets_the_budget() {
        let data = gaussian(2000, 16, 9);
        let index = DetIndex::build(data.clone(), &small_params()).unwrap();
        let probe = data.row(17).to_vec();
        let r = index.estimate_rmin(core::slice::from_ref(&probe), 5).unwrap();
        let target = libm::ceil(index.params().beta * 2000.0 + 5.0) as usize;
        assert!(index.candidate_count(&probe, r).unwrap() >= target);
        assert!(index.candidate_count(&probe, r / index.params().c).unwrap() < target);
        let twice = index.estimate_rmin(&[probe.clone(), probe.clone()], 5).unwrap();
        assert_eq!(twice, r);
    }

    #[test]
    fn rmin_for_a_single_projected_distance() {
        let d = 8;
        let p: Vec<f32> = (0..d).map(|i| 1.0 + i as f32).collect();
        let data = Dataset::new(d, p.repeat(300)).unwrap();
        let params = LshParams { hashes: 4, trees: 1, ..small_params() };
        let params = LshParams { epsilon: crate::derive_params(4, params.c, 1).unwrap().epsilon, ..params };
        let index = DetIndex::build(data, &params).unwrap();
        let q = vec![0.0f32; d];
        let rho = libm::sqrt(squared_distance_f64(
            &index.projector().project_point(&q, 0).unwrap(),
            &index.projector().project_point(&p, 0).unwrap(),
        ));
        let r = index.estimate_rmin(&[q], 5).unwrap();
        let eps = index.radius_scale();
        assert!(eps * r >= rho * (1.0 - 1e-12));
        assert!(rho > eps * r / index.params().c);
        assert_eq!(index.r_min(), index.estimate_rmin(&[p], 5).unwrap());
    }

    #[test]
    fn build_is_deterministic() {
        let data = gaussian(1000, 8, 10);
        let a = DetIndex::build(data.clone(), &small_params()).unwrap();
        let b = DetIndex::build(data, &small_params()).unwrap();
        assert_eq!(a.r_min(), b.r_min());
        assert_eq!(a.trees(), b.trees());
        assert_eq!(a.table(), b.table());
    }

    #[test]
    fn det_only_uses_one_tree() {
        let data = gaussian(100, 64, 11);
        let index = DetIndex::build_det_only(data.clone(), &small_params()).unwrap();
        assert_eq!(index.trees().len(), 1);
        assert!(index.is_det_only());
        assert_eq!(index.radius_scale(), 0.5);
        let q = gaussian(1, 64, 12).into_vec();
        let result = det_only_ck_ann(data.clone(), &q, 100, &small_params()).unwrap();
        assert_eq!(result.hits, brute_force(&data, &q));
    }

    #[test]
    fn from_parts_rejects_mismatch() {
        let index = DetIndex::build(gaussian(200, 8, 13), &small_params()).unwrap();
        let rebuilt = DetIndex::from_parts(
            index.params().clone(),
            index.projector().clone(),
            index.table().clone(),
            index.trees().to_vec(),
            index.data().clone(),
            index.r_min(),
        )
        .unwrap();
        assert_eq!(rebuilt.ck_ann(index.data().row(3), 5).unwrap(), index.ck_ann(index.data().row(3), 5).unwrap());
        let err = DetIndex::from_parts(
            index.params().clone(),
            index.projector().clone(),
            index.table().clone(),
            index.trees()[..1].to_vec(),
            index.data().clone(),
            index.r_min(),
        );
        assert!(err.is_err());
        assert!(DetIndex::from_parts(
            index.params().clone(),
            index.projector().clone(),
            index.table().clone(),
            index.trees().to_vec(),
            gaussian(199, 8, 13),
            index.r_min(),
        )
        .is_err());
    }
}
