#![allow(dead_code)]

use std::sync::Arc;

use airtree::bench::{self, BenchConfig, DatasetSource, TrainedModels};
use airtree::workload::{PointDistribution, Workload, WorkloadSpec};
use airtree::{Point, RTree, Rect};

pub fn brute_force(points: &[Point], q: &Rect) -> Vec<Point> {
    let mut v: Vec<Point> = points
        .iter()
        .copied()
        .filter(|p| q.contains_point(p))
        .collect();
    v.sort_by_key(Point::key);
    v
}

pub fn sorted(mut v: Vec<Point>) -> Vec<Point> {
    v.sort_by_key(Point::key);
    v
}

/// A small clustered configuration that trains in well under a second.
pub fn small_config(seed: u64) -> BenchConfig {
    BenchConfig {
        dataset: DatasetSource::Synthetic {
            count: 20_000,
            distribution: PointDistribution::GaussianClusters { clusters: 4 },
        },
        max_entries: 50,
        workload: WorkloadSpec {
            selectivity: 0.001,
            query_count: 40,
            ..WorkloadSpec::default()
        },
        forest_trees: 30,
        repetitions: 1,
        seed,
        ..BenchConfig::default()
    }
}

pub struct Fixture {
    pub cfg: BenchConfig,
    pub points: Vec<Point>,
    pub tree: Arc<RTree>,
    pub workload: Workload,
    pub models: TrainedModels,
}

pub fn fixture(seed: u64) -> Fixture {
    let cfg = small_config(seed);
    let ds = bench::load_dataset(&cfg).unwrap();
    let tree = Arc::new(bench::build_rtree(&cfg, &ds).unwrap());
    let workload = bench::generate_workload(&cfg, &tree).unwrap();
    let models = bench::train_models(&cfg, &tree, &workload).unwrap();
    Fixture {
        cfg,
        points: ds.points,
        tree,
        workload,
        models,
    }
}
