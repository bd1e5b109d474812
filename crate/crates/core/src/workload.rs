//! Datasets, synthetic range-query workloads, and training-set preparation.
//!
//! Queries are produced by growing a rectangle around a random data point
//! until it returns roughly `selectivity * |points|` results, executing it
//! on the R-tree, and keeping it only if its overlap ratio lands in a bucket
//! that still has room.

use std::collections::HashSet;
use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point, Rect};
use crate::learn::{Features, LabelSet};
use crate::rtree::{LeafId, RTree};

pub const DEFAULT_ALPHA_TARGETS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 1.0];
pub const DEFAULT_ALPHA_TOLERANCE: f64 = 0.05;
/// Result counts within this fraction of the target count are accepted.
pub const SELECTIVITY_SLACK: f64 = 0.2;
pub const DEFAULT_ATTEMPTS_PER_QUERY: usize = 200;
/// Absorbs rounding in `|alpha - target| <= tolerance` (e.g. `0.8 - 0.75`).
pub const ALPHA_EPS: f64 = 1e-9;

/// Side length of the square domain used by [`synth_points`].
pub const SYNTH_EXTENT: f64 = 1000.0;

/// Deduplicated point set with its tight bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub points: Vec<Point>,
    pub bounds: Rect,
}

impl Dataset {
    /// Drops exact duplicates (first occurrence wins) and computes bounds.
    pub fn from_points(name: impl Into<String>, points: Vec<Point>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(points.len());
        let mut kept = Vec::with_capacity(points.len());
        for p in points {
            if !p.is_finite() {
                return Err(Error::InputDomain(format!(
                    "non-finite point ({}, {})",
                    p.x, p.y
                )));
            }
            if seen.insert(p.key()) {
                kept.push(p);
            }
        }
        let bounds = Rect::bounding(&kept)
            .ok_or_else(|| Error::InputDomain("dataset has no points".into()))?;
        Ok(Self {
            name: name.into(),
            points: kept,
            bounds,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl std::str::FromStr for ColumnRef {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => ColumnRef::Index(i),
            Err(_) => ColumnRef::Name(s.to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub x_column: ColumnRef,
    pub y_column: ColumnRef,
    pub has_header: bool,
    /// Keep only the first N distinct usable points, in file order.
    pub head_limit: Option<usize>,
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            x_column: ColumnRef::Index(0),
            y_column: ColumnRef::Index(1),
            has_header: true,
            head_limit: None,
            delimiter: b',',
        }
    }
}

/// Reads a point CSV. Rows with missing or non-numeric coordinates and exact
/// duplicate points are dropped.
pub fn ingest_csv(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let data_err = |message: String| Error::Data {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .delimiter(opts.delimiter)
        .flexible(true)
        .from_path(path)
        .map_err(|e| data_err(e.to_string()))?;
    let resolve = |c: &ColumnRef, headers: Option<&csv::StringRecord>| -> Result<usize> {
        match c {
            ColumnRef::Index(i) => Ok(*i),
            ColumnRef::Name(n) => headers
                .and_then(|h| h.iter().position(|f| f.trim() == n))
                .ok_or_else(|| data_err(format!("no column named {n:?}"))),
        }
    };
    let headers = if opts.has_header {
        Some(
            reader
                .headers()
                .map_err(|e| data_err(e.to_string()))?
                .clone(),
        )
    } else {
        None
    };
    let xi = resolve(&opts.x_column, headers.as_ref())?;
    let yi = resolve(&opts.y_column, headers.as_ref())?;

    let limit = opts.head_limit.unwrap_or(usize::MAX);
    let mut seen = HashSet::new();
    let mut points = Vec::new();
    for (line, record) in reader.records().enumerate() {
        if points.len() >= limit {
            break;
        }
        let record = record.map_err(|e| data_err(format!("row {}: {e}", line + 1)))?;
        let parse = |i: usize| {
            record
                .get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
        };
        let (Some(x), Some(y)) = (parse(xi), parse(yi)) else {
            continue;
        };
        let p = Point { x, y };
        if seen.insert(p.key()) {
            points.push(p);
        }
    }
    if points.is_empty() {
        return Err(Error::NoUsableRows(path.to_path_buf()));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    Dataset::from_points(name, points)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointDistribution {
    Uniform,
    /// `clusters` Gaussian blobs with random centers and spreads.
    GaussianClusters {
        clusters: usize,
    },
}

/// Deterministic synthetic points in `[0, SYNTH_EXTENT]^2`, resampling collisions.
pub fn synth_points(count: usize, dist: PointDistribution, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::InputDomain("point count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(count);
    let mut points = Vec::with_capacity(count);
    let clusters: Vec<(f64, f64, Normal<f64>, Normal<f64>)> = match dist {
        PointDistribution::Uniform => Vec::new(),
        PointDistribution::GaussianClusters { clusters } => {
            if clusters == 0 {
                return Err(Error::InputDomain("need at least one cluster".into()));
            }
            (0..clusters)
                .map(|_| {
                    let cx = rng.random_range(0.15..0.85) * SYNTH_EXTENT;
                    let cy = rng.random_range(0.15..0.85) * SYNTH_EXTENT;
                    let sx = rng.random_range(0.03..0.12) * SYNTH_EXTENT;
                    let sy = rng.random_range(0.03..0.12) * SYNTH_EXTENT;
                    (
                        cx,
                        cy,
                        Normal::new(0.0, sx).expect("positive sigma"),
                        Normal::new(0.0, sy).expect("positive sigma"),
                    )
                })
                .collect()
        }
    };
    while points.len() < count {
        let p = if clusters.is_empty() {
            Point {
                x: rng.random::<f64>() * SYNTH_EXTENT,
                y: rng.random::<f64>() * SYNTH_EXTENT,
            }
        } else {
            let (cx, cy, nx, ny) = &clusters[rng.random_range(0..clusters.len())];
            let x = (cx + nx.sample(&mut rng)).clamp(0.0, SYNTH_EXTENT);
            let y = (cy + ny.sample(&mut rng)).clamp(0.0, SYNTH_EXTENT);
            Point { x, y }
        };
        if seen.insert(p.key()) {
            points.push(p);
        }
    }
    let name = match dist {
        PointDistribution::Uniform => format!("uniform-{count}-s{seed}"),
        PointDistribution::GaussianClusters { clusters } => {
            format!("gauss{clusters}-{count}-s{seed}")
        }
    };
    Dataset::from_points(name, points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub selectivity: f64,
    /// Maximum queries kept per alpha bucket.
    pub query_count: usize,
    pub alpha_targets: Vec<f64>,
    pub alpha_tolerance: f64,
    pub rng_seed: u64,
    /// Attempt budget is this many attempts per requested query.
    pub attempts_per_query: usize,
    /// Query aspect ratios are drawn log-uniformly from `[1/max, max]`.
    pub max_aspect: f64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            selectivity: 0.0002,
            query_count: 1000,
            alpha_targets: DEFAULT_ALPHA_TARGETS.to_vec(),
            alpha_tolerance: DEFAULT_ALPHA_TOLERANCE,
            rng_seed: 0,
            attempts_per_query: DEFAULT_ATTEMPTS_PER_QUERY,
            max_aspect: 16.0,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if !(self.selectivity > 0.0 && self.selectivity < 1.0) {
            return cfg(format!("selectivity {} not in (0, 1)", self.selectivity));
        }
        if self.target_results(dataset_len) < 1 {
            return cfg(format!(
                "selectivity {} on {dataset_len} points targets zero results",
                self.selectivity
            ));
        }
        if self.query_count == 0 {
            return cfg("query_count must be positive".into());
        }
        if self.alpha_targets.is_empty()
            || self.alpha_targets.windows(2).any(|w| w[0] >= w[1])
            || self.alpha_targets.iter().any(|&a| !(a > 0.0 && a <= 1.0))
        {
            return cfg(format!(
                "alpha targets must be strictly ascending in (0, 1]: {:?}",
                self.alpha_targets
            ));
        }
        if !(self.alpha_tolerance >= 0.0 && self.alpha_tolerance < 0.5) {
            return cfg(format!(
                "alpha tolerance {} out of range",
                self.alpha_tolerance
            ));
        }
        if self.max_aspect < 1.0 || !self.max_aspect.is_finite() {
            return cfg(format!("max aspect {} must be >= 1", self.max_aspect));
        }
        Ok(())
    }

    pub fn target_results(&self, dataset_len: usize) -> usize {
        (self.selectivity * dataset_len as f64).round() as usize
    }

    /// Index of the target within tolerance of `alpha`, nearest first.
    pub fn bucket_of(&self, alpha: f64) -> Option<usize> {
        self.alpha_targets
            .iter()
            .enumerate()
            .filter(|(_, &t)| (alpha - t).abs() <= self.alpha_tolerance + ALPHA_EPS)
            .min_by(|a, b| (alpha - a.1).abs().total_cmp(&(alpha - b.1).abs()))
            .map(|(i, _)| i)
    }
}

/// A range query executed on the R-tree, with its overlap statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledQuery {
    pub rect: Rect,
    pub alpha: f64,
    pub tn: usize,
    pub vn: usize,
    pub true_leaf_ids: Vec<LeafId>,
    pub selectivity_actual: f64,
}

impl LabeledQuery {
    /// Executes `rect` and records its statistics; `None` if nothing is visited.
    pub fn execute(tree: &RTree, rect: Rect) -> Result<Option<Self>> {
        let trace = tree.range_query(&rect)?;
        let Some(alpha) = trace.alpha() else {
            return Ok(None);
        };
        Ok(Some(Self {
            rect,
            alpha,
            tn: trace.tn(),
            vn: trace.vn(),
            selectivity_actual: trace.results.len() as f64 / tree.len() as f64,
            true_leaf_ids: trace.true_leaves,
        }))
    }

    /// Re-executes the query and checks every stored statistic.
    pub fn verify(&self, tree: &RTree) -> Result<()> {
        let fresh = Self::execute(tree, self.rect)?;
        match fresh {
            Some(f) if f == *self => Ok(()),
            other => Err(Error::Mismatch(format!(
                "stored query {:?} re-executes as {:?}",
                self, other
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaBucket {
    pub target: f64,
    pub queries: Vec<LabeledQuery>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub spec: WorkloadSpec,
    pub target_results: usize,
    pub attempts: usize,
    pub buckets: Vec<AlphaBucket>,
}

impl Workload {
    pub fn all_queries(&self) -> impl Iterator<Item = &LabeledQuery> {
        self.buckets.iter().flat_map(|b| b.queries.iter())
    }

    pub fn len(&self) -> usize {
        self.buckets.iter().map(|b| b.queries.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One growth attempt: random seed point, aspect ratio, and anchor; scale
/// searched until the result count is within [`SELECTIVITY_SLACK`] of `target`.
fn grow_query(
    tree: &RTree,
    ds: &Dataset,
    spec: &WorkloadSpec,
    target: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Rect> {
    let seed = ds.points[rng.random_range(0..ds.len())];
    let log_aspect = rng.random_range(-1.0..=1.0) * spec.max_aspect.ln();
    let aspect = log_aspect.exp().sqrt();
    let (u, v) = (rng.random::<f64>(), rng.random::<f64>());
    let lo_count = ((1.0 - SELECTIVITY_SLACK) * target as f64).ceil().max(1.0) as usize;
    let hi_count = ((1.0 + SELECTIVITY_SLACK) * target as f64)
        .floor()
        .max(lo_count as f64) as usize;

    let rect_at = |s: f64| {
        let w = s * aspect;
        let h = s / aspect;
        Rect {
            xmin: seed.x - u * w,
            ymin: seed.y - v * h,
            xmax: seed.x + (1.0 - u) * w,
            ymax: seed.y + (1.0 - v) * h,
        }
    };
    let full = ds
        .bounds
        .width()
        .max(ds.bounds.height())
        .max(f64::MIN_POSITIVE);
    let mut hi = (target as f64 / ds.len() as f64 * ds.bounds.area())
        .sqrt()
        .max(full * 1e-9);
    let mut lo = 0.0;
    let mut count = tree.count_in(&rect_at(hi));
    let mut doublings = 0;
    while count < lo_count {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 64 || hi > 4.0 * full * spec.max_aspect {
            return None;
        }
        count = tree.count_in(&rect_at(hi));
    }
    for _ in 0..64 {
        if count <= hi_count {
            let r = rect_at(hi);
            return r.validate().is_ok().then_some(r);
        }
        let mid = lo + (hi - lo) / 2.0;
        if mid <= lo || mid >= hi {
            return None;
        }
        let c = tree.count_in(&rect_at(mid));
        if c < lo_count {
            lo = mid;
        } else {
            hi = mid;
            count = c;
        }
    }
    None
}

/// Rejection-samples queries into the spec's alpha buckets.
///
/// Attempt `i` draws from its own ChaCha stream `i`, so batches run in
/// parallel while the accepted sequence stays identical for a given seed.
pub fn synth_queries(ds: &Dataset, tree: &RTree, spec: &WorkloadSpec) -> Result<Workload> {
    spec.validate(ds.len())?;
    tree.leaf_count()?;
    let target = spec.target_results(ds.len());
    let n_buckets = spec.alpha_targets.len();
    let budget = spec
        .attempts_per_query
        .saturating_mul(spec.query_count)
        .saturating_mul(n_buckets);
    let mut buckets: Vec<Vec<LabeledQuery>> = vec![Vec::new(); n_buckets];
    let mut attempts = 0usize;
    const BATCH: usize = 2048;
    'outer: while attempts < budget {
        let end = (attempts + BATCH).min(budget);
        let batch: Vec<Option<LabeledQuery>> = (attempts..end)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
                rng.set_stream(i as u64);
                let rect = grow_query(tree, ds, spec, target, &mut rng)?;
                let q = LabeledQuery::execute(tree, rect).ok().flatten()?;
                (q.tn > 0).then_some(q)
            })
            .collect();
        for q in batch {
            attempts += 1;
            if let Some(q) = q {
                if let Some(b) = spec.bucket_of(q.alpha) {
                    if buckets[b].len() < spec.query_count {
                        buckets[b].push(q);
                    }
                }
            }
            if buckets.iter().all(|b| b.len() >= spec.query_count) {
                break 'outer;
            }
        }
    }
    if buckets.iter().all(Vec::is_empty) {
        return Err(Error::Workload(format!(
            "attempt budget of {budget} exhausted with every alpha bucket empty"
        )));
    }
    for (t, b) in spec.alpha_targets.iter().zip(&buckets) {
        if b.len() < spec.query_count {
            warn!(
                "alpha bucket {t}: only {} of {} queries after {attempts} attempts",
                b.len(),
                spec.query_count
            );
        }
    }
    Ok(Workload {
        spec: spec.clone(),
        target_results: target,
        attempts,
        buckets: spec
            .alpha_targets
            .iter()
            .zip(buckets)
            .map(|(&target, queries)| AlphaBucket { target, queries })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub features: Features,
    pub labels: LabelSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryExample {
    pub features: Features,
    /// 0: high overlap (`alpha <= tau`), 1: low overlap.
    pub label: u8,
}

/// One-hot multi-label examples over the raw rectangle coordinates. Queries
/// without true leaves are skipped with a warning.
pub fn make_multilabel_training<'a, I>(
    queries: I,
    leaf_count: usize,
) -> Result<Vec<TrainingExample>>
where
    I: IntoIterator<Item = &'a LabeledQuery>,
{
    let mut out = Vec::new();
    for q in queries {
        if q.true_leaf_ids.is_empty() {
            warn!("skipping query {:?} with no true leaves", q.rect);
            continue;
        }
        out.push(TrainingExample {
            features: q.rect.features(),
            labels: LabelSet::from_ids(leaf_count, q.true_leaf_ids.iter().copied())?,
        });
    }
    Ok(out)
}

pub fn binary_label(alpha: f64, tau: f64) -> u8 {
    u8::from(alpha > tau)
}

pub fn make_binary_training<'a, I>(queries: I, tau: f64) -> Vec<BinaryExample>
where
    I: IntoIterator<Item = &'a LabeledQuery>,
{
    queries
        .into_iter()
        .map(|q| BinaryExample {
            features: q.rect.features(),
            label: binary_label(q.alpha, tau),
        })
        .collect()
}

/// Per-class shuffled split keeping `round(train_fraction * n_class)` of each
/// class for training. Order within each side follows the input order.
pub fn stratified_split(
    examples: &[BinaryExample],
    train_fraction: f64,
    seed: u64,
) -> (Vec<BinaryExample>, Vec<BinaryExample>) {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; examples.len()];
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..examples.len())
            .filter(|&i| examples[i].label == class)
            .collect();
        idx.shuffle(&mut rng);
        let keep = (train_fraction * idx.len() as f64).round() as usize;
        for &i in &idx[..keep] {
            in_train[i] = true;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (e, t) in examples.iter().zip(in_train) {
        if t {
            train.push(*e);
        } else {
            test.push(*e);
        }
    }
    (train, test)
}

/// On-disk form of one alpha bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadFile {
    pub alpha_target: f64,
    pub spec: WorkloadSpec,
    pub target_results: usize,
    pub dataset_size: usize,
    pub rtree_fingerprint: String,
    pub queries: Vec<LabeledQuery>,
}

pub const WORKLOAD_KIND: &str = "workload";
