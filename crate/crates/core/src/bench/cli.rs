//! Command-line driver. Each stage reads and writes artifacts under one
//! output directory, so stages can be run separately or all at once.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::config::{BenchConfig, DatasetSource};
use super::report::{self, render_sizes, render_table};
use super::{
    build_rtree, fit_aitrees, generate_workload, load_dataset, run_bench, train_router, Router,
    TrainedModels,
};
use crate::aitree::{AiTree, AiTreeBundle, AITREE_KIND};
use crate::error::{Error, Result};
use crate::hybrid::{HybridManifest, HYBRID_KIND};
use crate::persist;
use crate::rtree::RTree;
use crate::workload::{
    AlphaBucket, ColumnRef, CsvOptions, LabeledQuery, PointDistribution, Workload, WorkloadFile,
    WORKLOAD_KIND,
};

pub const RTREE_KIND: &str = "rtree";
pub const ROUTER_KIND: &str = "router";
pub const RTREE_FILE: &str = "rtree.json";
pub const ROUTER_FILE: &str = "models/router.json";
pub const HYBRID_FILE: &str = "hybrid.json";
pub const BENCH_DIR: &str = "bench";
pub const REPORT_DIR: &str = "report";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "airtree",
    version,
    about = "Learned leaf prediction on top of an R-tree"
)]
pub struct Cli {
    /// Seed for every stochastic stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// TOML file whose keys override command-line flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub opts: StageOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load points and build the R-tree snapshot.
    Build,
    /// Generate labeled query workloads against the snapshot.
    Gen {
        /// Re-execute every generated query and check its labels.
        #[arg(long)]
        verify: bool,
    },
    /// Fit the AI-trees and the router.
    Train,
    /// Run every query through all three indexes and log costs.
    Bench,
    /// Merge bench logs from one or more output directories.
    Report {
        /// Output directories holding `bench/` logs; defaults to --out-dir.
        dirs: Vec<PathBuf>,
    },
    /// build, gen, train and bench in sequence.
    Run,
}

#[derive(Debug, Default, Args)]
pub struct StageOpts {
    /// CSV file of points; a synthetic dataset is used otherwise.
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,
    /// Column index or header name of the x coordinate.
    #[arg(long, global = true)]
    pub x_col: Option<ColumnRef>,
    #[arg(long, global = true)]
    pub y_col: Option<ColumnRef>,
    #[arg(long, global = true)]
    pub no_header: bool,
    /// Keep only the first N distinct usable points.
    #[arg(long, global = true)]
    pub head_limit: Option<usize>,
    /// Number of synthetic points.
    #[arg(long, global = true)]
    pub points: Option<usize>,
    /// Synthetic layout: `uniform` or `clusters:K`.
    #[arg(long, global = true)]
    pub distribution: Option<String>,
    #[arg(long, global = true)]
    pub max_entries: Option<usize>,
    #[arg(long, global = true)]
    pub min_entries: Option<usize>,
    #[arg(long, global = true)]
    pub selectivity: Option<f64>,
    /// Comma-separated alpha bucket targets.
    #[arg(long, global = true, value_delimiter = ',')]
    pub alpha_targets: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub alpha_tol: Option<f64>,
    /// Queries per alpha bucket.
    #[arg(long, global = true)]
    pub count: Option<usize>,
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    #[arg(long, global = true)]
    pub max_grid: Option<usize>,
    #[arg(long, global = true)]
    pub trees: Option<usize>,
    /// Fit one AI-tree on all buckets instead of one per bucket.
    #[arg(long, global = true)]
    pub train_union: bool,
    #[arg(long, global = true)]
    pub io_ms: Option<f64>,
    #[arg(long, global = true)]
    pub repetitions: Option<usize>,
    #[arg(long, global = true)]
    pub serial: bool,
    /// Also check every answer against a linear scan.
    #[arg(long, global = true)]
    pub oracle: bool,
}

fn parse_distribution(s: &str) -> Result<PointDistribution> {
    if s == "uniform" {
        return Ok(PointDistribution::Uniform);
    }
    s.strip_prefix("clusters:")
        .and_then(|k| k.parse().ok())
        .filter(|&k| k > 0)
        .map(|clusters| PointDistribution::GaussianClusters { clusters })
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown distribution {s:?}; use uniform or clusters:K"
            ))
        })
}

impl Cli {
    /// Defaults, then flags, then the config file.
    pub fn resolve_config(&self) -> Result<BenchConfig> {
        let o = &self.opts;
        let mut cfg = BenchConfig::default();
        if let Some(path) = &o.csv {
            let d = CsvOptions::default();
            cfg.dataset = DatasetSource::Csv {
                path: path.clone(),
                options: CsvOptions {
                    x_column: o.x_col.clone().unwrap_or(d.x_column),
                    y_column: o.y_col.clone().unwrap_or(d.y_column),
                    has_header: !o.no_header,
                    head_limit: o.head_limit,
                    delimiter: d.delimiter,
                },
            };
        } else if o.points.is_some() || o.distribution.is_some() {
            let DatasetSource::Synthetic {
                count,
                distribution,
            } = cfg.dataset
            else {
                unreachable!("default dataset is synthetic")
            };
            cfg.dataset = DatasetSource::Synthetic {
                count: o.points.unwrap_or(count),
                distribution: match &o.distribution {
                    Some(s) => parse_distribution(s)?,
                    None => distribution,
                },
            };
        }
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = o.$flag.clone() { cfg.$($field).+ = v; })*
            };
        }
        set!(
            max_entries => max_entries,
            selectivity => workload.selectivity,
            alpha_targets => workload.alpha_targets,
            alpha_tol => workload.alpha_tolerance,
            count => workload.query_count,
            tau => tau,
            max_grid => max_grid,
            trees => forest_trees,
            io_ms => io_ms_per_leaf,
            repetitions => repetitions,
        );
        cfg.min_entries = o.min_entries.or(cfg.min_entries);
        cfg.train_union |= o.train_union;
        cfg.serial |= o.serial;
        cfg.oracle |= o.oracle;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        if let Some(path) = &self.config {
            cfg = cfg.overlay_file(path)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RTreeSnapshot {
    pub dataset: DatasetSource,
    pub seed: u64,
    pub tree: RTree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterFile {
    pub router: Router,
    pub rtree_fingerprint: String,
    pub workload_fingerprint: String,
}

fn workload_path(out: &Path, target: f64) -> PathBuf {
    out.join("workloads").join(format!("alpha_{target}.json"))
}

fn aitree_path(out: &Path, cfg: &BenchConfig, target: f64) -> PathBuf {
    if cfg.train_union {
        out.join("models/aitree_union.json")
    } else {
        out.join("models")
            .join(format!("aitree_alpha_{target}.json"))
    }
}

pub fn cmd_build(cfg: &BenchConfig) -> Result<RTree> {
    let ds = load_dataset(cfg)?;
    let tree = build_rtree(cfg, &ds)?;
    persist::save(
        &cfg.out_dir.join(RTREE_FILE),
        RTREE_KIND,
        &RTreeSnapshot {
            dataset: cfg.dataset.clone(),
            seed: cfg.seed,
            tree: tree.clone(),
        },
    )?;
    println!(
        "built R-tree: {} points, M={}, {} leaves, height {}, {} bytes",
        tree.len(),
        tree.config().max_entries,
        tree.leaf_count()?,
        tree.height(),
        tree.tree_size_bytes()
    );
    Ok(tree)
}

fn load_tree(cfg: &BenchConfig) -> Result<Arc<RTree>> {
    let snap: RTreeSnapshot = persist::load(&cfg.out_dir.join(RTREE_FILE), RTREE_KIND)?;
    if snap.tree.config() != cfg.rtree_config()? {
        warn!(
            "snapshot was built with {:?}, configuration asks for {:?}; using the snapshot",
            snap.tree.config(),
            cfg.rtree_config()?
        );
    }
    Ok(Arc::new(snap.tree))
}

pub fn cmd_gen(cfg: &BenchConfig, verify: bool) -> Result<Workload> {
    let tree = load_tree(cfg)?;
    let workload = generate_workload(cfg, &tree)?;
    let fp = persist::fingerprint(&*tree)?;
    for b in &workload.buckets {
        persist::save(
            &workload_path(&cfg.out_dir, b.target),
            WORKLOAD_KIND,
            &WorkloadFile {
                alpha_target: b.target,
                spec: workload.spec.clone(),
                target_results: workload.target_results,
                dataset_size: tree.len(),
                rtree_fingerprint: fp.clone(),
                queries: b.queries.clone(),
            },
        )?;
        let sel: Vec<f64> = b.queries.iter().map(|q| q.selectivity_actual).collect();
        if sel.is_empty() {
            println!("alpha {}: 0 queries", b.target);
        } else {
            println!(
                "alpha {}: {} queries, selectivity mean {:.6} min {:.6} max {:.6}",
                b.target,
                b.queries.len(),
                sel.iter().sum::<f64>() / sel.len() as f64,
                sel.iter().copied().fold(f64::INFINITY, f64::min),
                sel.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            );
        }
    }
    println!(
        "{} attempts, target {} results per query",
        workload.attempts, workload.target_results
    );
    if verify {
        for q in workload.all_queries() {
            q.verify(&tree)?;
        }
        println!("verified {} queries", workload.len());
    }
    Ok(workload)
}

fn load_workload(cfg: &BenchConfig, tree: &RTree) -> Result<Workload> {
    let fp = persist::fingerprint(tree)?;
    let spec = cfg.workload_spec();
    let mut buckets = Vec::new();
    let mut target_results = spec.target_results(tree.len());
    for &t in &spec.alpha_targets {
        let path = workload_path(&cfg.out_dir, t);
        let f: WorkloadFile = persist::load(&path, WORKLOAD_KIND)?;
        if f.rtree_fingerprint != fp {
            return Err(Error::Fingerprint(format!(
                "{} was generated for R-tree {}, current snapshot is {fp}",
                path.display(),
                f.rtree_fingerprint
            )));
        }
        target_results = f.target_results;
        buckets.push(AlphaBucket {
            target: t,
            queries: f.queries,
        });
    }
    Ok(Workload {
        spec,
        target_results,
        attempts: 0,
        buckets,
    })
}

fn workload_fp(workload: &Workload) -> Result<String> {
    let all: Vec<LabeledQuery> = workload.all_queries().cloned().collect();
    persist::fingerprint(&all)
}

pub fn cmd_train(cfg: &BenchConfig) -> Result<TrainedModels> {
    let tree = load_tree(cfg)?;
    let workload = load_workload(cfg, &tree)?;
    let aitrees = fit_aitrees(cfg, &tree, &workload)?;
    let router = train_router(cfg, &workload)?;
    let rtree_fp = persist::fingerprint(&*tree)?;
    let mut bundles = Vec::new();
    for (b, ai) in workload.buckets.iter().zip(&aitrees) {
        let Some(ai) = ai else { continue };
        let path = aitree_path(&cfg.out_dir, cfg, b.target);
        persist::save(&path, AITREE_KIND, &ai.to_bundle()?)?;
        bundles.push((b.target, relative(&cfg.out_dir, &path)));
        println!(
            "alpha {}: grid {g}x{g}, {} models, fit {:.4}, {} bytes",
            b.target,
            ai.grid().model_count(),
            ai.training_fit(),
            ai.size_bytes(),
            g = ai.grid_dim()
        );
    }
    persist::save(
        &cfg.out_dir.join(ROUTER_FILE),
        ROUTER_KIND,
        &RouterFile {
            router: router.clone(),
            rtree_fingerprint: rtree_fp.clone(),
            workload_fingerprint: workload_fp(&workload)?,
        },
    )?;
    println!(
        "router: held-out accuracy {:.4} (majority baseline {:.4}), {} bytes",
        router.test_accuracy,
        router.baseline_accuracy,
        router.forest.size_bytes()
    );
    persist::save(
        &cfg.out_dir.join(HYBRID_FILE),
        HYBRID_KIND,
        &HybridManifest {
            rtree_snapshot: RTREE_FILE.into(),
            rtree_fingerprint: rtree_fp,
            aitree_bundles: bundles,
            router_model: ROUTER_FILE.into(),
            tau: cfg.tau,
            cost_model: cfg.cost_model()?,
        },
    )?;
    Ok(TrainedModels { aitrees, router })
}

fn relative(base: &Path, p: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).display().to_string()
}

fn load_models(cfg: &BenchConfig, tree: &Arc<RTree>, workload: &Workload) -> Result<TrainedModels> {
    let manifest: HybridManifest = persist::load(&cfg.out_dir.join(HYBRID_FILE), HYBRID_KIND)?;
    let rf: RouterFile = persist::load(&cfg.out_dir.join(&manifest.router_model), ROUTER_KIND)?;
    let rtree_fp = persist::fingerprint(&**tree)?;
    if rf.rtree_fingerprint != rtree_fp || rf.workload_fingerprint != workload_fp(workload)? {
        return Err(Error::Fingerprint(
            "router was trained on a different R-tree or workload; rerun train".into(),
        ));
    }
    let mut aitrees = Vec::new();
    for (i, b) in workload.buckets.iter().enumerate() {
        let Some((_, file)) = manifest.aitree_bundles.iter().find(|(t, _)| *t == b.target) else {
            aitrees.push(None);
            continue;
        };
        let bundle: AiTreeBundle = persist::load(&cfg.out_dir.join(file), AITREE_KIND)?;
        let queries = super::training_queries(cfg, workload, i);
        aitrees.push(Some(AiTree::from_bundle(
            bundle,
            tree.clone(),
            Some(&queries),
        )?));
    }
    Ok(TrainedModels {
        aitrees,
        router: rf.router,
    })
}

pub fn cmd_bench(cfg: &BenchConfig) -> Result<Vec<report::AggregateRow>> {
    let tree = load_tree(cfg)?;
    let workload = load_workload(cfg, &tree)?;
    let models = load_models(cfg, &tree, &workload)?;
    let oracle_points = if cfg.oracle {
        Some(load_dataset(cfg)?.points)
    } else {
        None
    };
    let outcome = run_bench(cfg, &tree, &workload, &models, oracle_points.as_deref())?;
    let dir = cfg.out_dir.join(BENCH_DIR);
    let aggregates = report::write_bench_outputs(&dir, &outcome.records, &outcome.sizes)?;
    print!(
        "{}\n{}",
        render_table(&aggregates),
        render_sizes(&outcome.sizes)
    );
    println!("wrote {}", dir.display());
    Ok(aggregates)
}

pub fn cmd_report(cfg: &BenchConfig, dirs: &[PathBuf]) -> Result<Vec<report::AggregateRow>> {
    let inputs: Vec<PathBuf> = if dirs.is_empty() {
        vec![cfg.out_dir.join(BENCH_DIR)]
    } else {
        dirs.iter().map(|d| d.join(BENCH_DIR)).collect()
    };
    let out = cfg.out_dir.join(REPORT_DIR);
    let aggregates = report::merge_reports(&inputs, &out)?;
    print!("{}", render_table(&aggregates));
    println!("wrote {}", out.display());
    Ok(aggregates)
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InputDomain(_) => EXIT_USAGE,
        Error::Mismatch(_) => EXIT_MISMATCH,
        _ => EXIT_DATA,
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.resolve_config()?;
    debug!("configuration: {cfg:?}");
    match &cli.command {
        Command::Build => cmd_build(&cfg).map(drop),
        Command::Gen { verify } => cmd_gen(&cfg, *verify).map(drop),
        Command::Train => cmd_train(&cfg).map(drop),
        Command::Bench => cmd_bench(&cfg).map(drop),
        Command::Report { dirs } => cmd_report(&cfg, dirs).map(drop),
        Command::Run => {
            cmd_build(&cfg)?;
            cmd_gen(&cfg, false)?;
            cmd_train(&cfg)?;
            cmd_bench(&cfg).map(drop)
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
