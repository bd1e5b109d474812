//! End-to-end pipeline: build the R-tree, synthesize labeled workloads, fit
//! the learned indexes and router, and measure all three query paths.

pub mod cli;
pub mod config;
pub mod report;

use std::sync::Arc;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{BenchConfig, DatasetSource, SeedStage};
pub use report::{AggregateRow, QueryRecord, SizeRow, Variant};

use crate::aitree::{canonical, AiTree, FitOptions};
use crate::error::{Error, Result};
use crate::geom::{Point, Rect};
use crate::hybrid::{aitree_query, rtree_query, CostReport, HybridIndex};
use crate::learn::{ForestParams, RandomForest};
use crate::rtree::RTree;
use crate::workload::{
    ingest_csv, make_binary_training, stratified_split, synth_points, synth_queries, Dataset,
    LabeledQuery, Workload,
};

pub const ROUTER_TRAIN_FRACTION: f64 = 0.8;

pub fn load_dataset(cfg: &BenchConfig) -> Result<Dataset> {
    match &cfg.dataset {
        DatasetSource::Csv { path, options } => ingest_csv(path, options),
        DatasetSource::Synthetic {
            count,
            distribution,
        } => synth_points(*count, *distribution, cfg.derive_seed(SeedStage::Dataset)),
    }
}

pub fn build_rtree(cfg: &BenchConfig, ds: &Dataset) -> Result<RTree> {
    RTree::build(cfg.rtree_config()?, &ds.points)
}

/// Query seeds are drawn from the tree's own points so a persisted snapshot
/// and an in-memory run generate the same workload.
pub fn generate_workload(cfg: &BenchConfig, tree: &RTree) -> Result<Workload> {
    let ds = Dataset::from_points("rtree", tree.points())?;
    synth_queries(&ds, tree, &cfg.workload_spec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Router {
    pub forest: RandomForest,
    pub tau: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub test_accuracy: f64,
    /// Accuracy of always answering the training majority class.
    pub baseline_accuracy: f64,
}

/// Trains the router on every bucket pooled, holding out a stratified 20%.
pub fn train_router(cfg: &BenchConfig, workload: &Workload) -> Result<Router> {
    let examples = make_binary_training(workload.all_queries(), cfg.tau);
    let (train, test) = stratified_split(
        &examples,
        ROUTER_TRAIN_FRACTION,
        cfg.derive_seed(SeedStage::RouterSplit),
    );
    let params = ForestParams {
        n_trees: cfg.forest_trees,
        ..ForestParams::with_seed(cfg.derive_seed(SeedStage::Forest))
    };
    let forest = RandomForest::train(&train, params)?;
    let ones = train.iter().filter(|e| e.label == 1).count();
    let majority = u8::from(2 * ones > train.len());
    let baseline_accuracy = if test.is_empty() {
        1.0
    } else {
        test.iter().filter(|e| e.label == majority).count() as f64 / test.len() as f64
    };
    Ok(Router {
        test_accuracy: forest.accuracy(&test),
        forest,
        tau: cfg.tau,
        train_size: train.len(),
        test_size: test.len(),
        baseline_accuracy,
    })
}

/// The queries an AI-tree for `bucket` is fitted on: that bucket alone, or
/// every bucket when training on the union.
pub fn training_queries(
    cfg: &BenchConfig,
    workload: &Workload,
    bucket: usize,
) -> Vec<LabeledQuery> {
    if cfg.train_union {
        workload.all_queries().cloned().collect()
    } else {
        workload.buckets[bucket].queries.clone()
    }
}

pub struct TrainedModels {
    /// One entry per alpha bucket; `None` for a bucket with no queries.
    pub aitrees: Vec<Option<AiTree>>,
    pub router: Router,
}

impl TrainedModels {
    /// Bytes of every distinct learned model: the AI-trees (counted once
    /// under union training) plus the router.
    pub fn ml_size_bytes(&self, union: bool) -> usize {
        let ai: Vec<usize> = self
            .aitrees
            .iter()
            .flatten()
            .map(AiTree::size_bytes)
            .collect();
        let ai_total = if union {
            ai.first().copied().unwrap_or(0)
        } else {
            ai.iter().sum()
        };
        ai_total + self.router.forest.size_bytes()
    }
}

pub fn fit_aitrees(
    cfg: &BenchConfig,
    tree: &Arc<RTree>,
    workload: &Workload,
) -> Result<Vec<Option<AiTree>>> {
    let bounds = tree.bounds().ok_or(Error::EmptyTree)?;
    let opts = FitOptions {
        max_grid: cfg.max_grid,
        ..FitOptions::default()
    };
    if cfg.train_union {
        let all = training_queries(cfg, workload, 0);
        let ai = AiTree::fit(&all, tree.clone(), bounds, opts)?;
        info!(
            "union AI-tree: grid {0}x{0}, fit {1:.4}",
            ai.grid_dim(),
            ai.training_fit()
        );
        return Ok(workload
            .buckets
            .iter()
            .map(|b| (!b.queries.is_empty()).then(|| ai.clone()))
            .collect());
    }
    workload
        .buckets
        .iter()
        .map(|b| {
            if b.queries.is_empty() {
                return Ok(None);
            }
            let ai = AiTree::fit(&b.queries, tree.clone(), bounds, opts)?;
            info!(
                "alpha {}: grid {2}x{2}, fit {1:.4}",
                b.target,
                ai.training_fit(),
                ai.grid_dim()
            );
            Ok(Some(ai))
        })
        .collect()
}

pub fn train_models(
    cfg: &BenchConfig,
    tree: &Arc<RTree>,
    workload: &Workload,
) -> Result<TrainedModels> {
    Ok(TrainedModels {
        aitrees: fit_aitrees(cfg, tree, workload)?,
        router: train_router(cfg, workload)?,
    })
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub records: Vec<QueryRecord>,
    pub sizes: Vec<SizeRow>,
    pub aggregates: Vec<AggregateRow>,
}

fn mismatch(q: &LabeledQuery, what: &str, got: usize, want: usize) -> Error {
    Error::Mismatch(format!(
        "{what} returned {got} points but the R-tree returned {want} for query {:?} (alpha {})",
        q.rect, q.alpha
    ))
}

fn brute_force(points: &[Point], q: &Rect) -> Vec<Point> {
    canonical(
        points
            .iter()
            .copied()
            .filter(|p| q.contains_point(p))
            .collect(),
    )
}

/// Runs every query through the R-tree, the bucket's AI-tree and the hybrid
/// index, failing on the first query whose result sets differ. With
/// `oracle` set, the R-tree answer is also checked against a linear scan.
pub fn run_bench(
    cfg: &BenchConfig,
    tree: &Arc<RTree>,
    workload: &Workload,
    models: &TrainedModels,
    oracle: Option<&[Point]>,
) -> Result<BenchOutcome> {
    let cost = cfg.cost_model()?;
    let selectivity = workload.spec.selectivity;
    let max_entries = tree.config().max_entries;
    let rtree_bytes = tree.tree_size_bytes();
    let router_bytes = models.router.forest.size_bytes();
    let mut records = Vec::new();
    let mut sizes = Vec::new();
    for (bucket, ai) in workload.buckets.iter().zip(&models.aitrees) {
        let Some(ai) = ai else { continue };
        let hybrid = HybridIndex::new(ai, tree, &models.router.forest, cfg.tau, cost)?;
        sizes.push(SizeRow {
            selectivity,
            max_entries,
            alpha_target: bucket.target,
            queries: bucket.queries.len(),
            grid_dim: ai.grid_dim(),
            model_count: ai.grid().model_count(),
            training_fit: ai.training_fit(),
            rtree_bytes,
            aitree_bytes: ai.size_bytes(),
            router_bytes,
            union: cfg.train_union,
            router_accuracy: models.router.test_accuracy,
            router_baseline: models.router.baseline_accuracy,
        });
        let one = |(i, q): (usize, &LabeledQuery)| -> Result<Vec<QueryRecord>> {
            let mut runs: [Vec<CostReport>; 3] = Default::default();
            for rep in 0..cfg.repetitions {
                let (rt, rt_cost) = rtree_query(tree, &q.rect, &cost)?;
                let (a, a_cost) = aitree_query(ai, &q.rect, &cost)?;
                let (h, h_cost) = hybrid.query(&q.rect)?;
                if rep == 0 {
                    let rt = canonical(rt);
                    if let Some(points) = oracle {
                        let want = brute_force(points, &q.rect);
                        if want != rt {
                            return Err(Error::Mismatch(format!(
                                "R-tree returned {} points but a linear scan finds {} for query {:?}",
                                rt.len(),
                                want.len(),
                                q.rect
                            )));
                        }
                    }
                    let a = canonical(a);
                    if a != rt {
                        return Err(mismatch(q, "AI-tree", a.len(), rt.len()));
                    }
                    let h = canonical(h);
                    if h != rt {
                        return Err(mismatch(q, "hybrid index", h.len(), rt.len()));
                    }
                }
                runs[0].push(rt_cost);
                runs[1].push(a_cost);
                runs[2].push(h_cost);
            }
            Ok(Variant::ALL
                .iter()
                .zip(&runs)
                .map(|(&variant, reps)| {
                    QueryRecord::new(selectivity, max_entries, bucket.target, i, variant, q, reps)
                })
                .collect())
        };
        let per_query: Vec<Vec<QueryRecord>> = if cfg.serial {
            bucket
                .queries
                .iter()
                .enumerate()
                .map(one)
                .collect::<Result<_>>()?
        } else {
            bucket
                .queries
                .par_iter()
                .enumerate()
                .map(one)
                .collect::<Result<_>>()?
        };
        records.extend(per_query.into_iter().flatten());
    }
    let aggregates = report::aggregate(&records);
    Ok(BenchOutcome {
        records,
        sizes,
        aggregates,
    })
}

/// Everything an in-memory end-to-end run produces.
pub struct PipelineRun {
    pub dataset: Dataset,
    pub tree: Arc<RTree>,
    pub workload: Workload,
    pub models: TrainedModels,
    pub outcome: BenchOutcome,
}

pub fn run_pipeline(cfg: &BenchConfig) -> Result<PipelineRun> {
    cfg.validate()?;
    let dataset = load_dataset(cfg)?;
    let tree = Arc::new(build_rtree(cfg, &dataset)?);
    info!(
        "R-tree: {} points, {} leaves, height {}",
        tree.len(),
        tree.leaf_count()?,
        tree.height()
    );
    let workload = generate_workload(cfg, &tree)?;
    info!(
        "workload: {} queries in {} attempts",
        workload.len(),
        workload.attempts
    );
    let models = train_models(cfg, &tree, &workload)?;
    let oracle = cfg.oracle.then_some(dataset.points.as_slice());
    let outcome = run_bench(cfg, &tree, &workload, &models, oracle)?;
    Ok(PipelineRun {
        dataset,
        tree,
        workload,
        models,
        outcome,
    })
}
