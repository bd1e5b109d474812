//! Per-query logs, aggregate figure series and model-size tables.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::CostReport;
use crate::workload::LabeledQuery;

pub const QUERIES_FILE: &str = "queries.csv";
pub const SIZES_FILE: &str = "sizes.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_TXT: &str = "summary.txt";

/// Per-query log columns whose values depend on wall-clock measurements.
pub const TIMING_COLUMNS: [&str; 4] = ["predict_ms", "cpu_ms", "total_ms", "total_ms_std"];

/// True for any log or summary column derived from wall-clock time.
pub fn is_timing_column(name: &str) -> bool {
    TIMING_COLUMNS.iter().any(|c| name.ends_with(c)) || name == "speedup_vs_rtree"
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Rtree,
    Aitree,
    Hybrid,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Rtree, Variant::Aitree, Variant::Hybrid];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Rtree => "rtree",
            Variant::Aitree => "aitree",
            Variant::Hybrid => "hybrid",
        }
    }
}

/// One line of the per-query log. Timings are means over `repetitions` runs
/// and `total_ms = predict_ms + cpu_ms + io_ms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub selectivity: f64,
    pub max_entries: usize,
    pub alpha_target: f64,
    pub query_id: usize,
    pub variant: Variant,
    /// `ai` or `rtree`: the structure that answered.
    pub route: String,
    /// AI-tree execution path, empty when the R-tree answered directly.
    pub path: String,
    pub alpha: f64,
    pub tn: usize,
    pub vn: usize,
    pub result_count: usize,
    pub leaf_accesses: usize,
    pub io_ms: f64,
    pub predict_ms: f64,
    pub cpu_ms: f64,
    pub total_ms: f64,
    pub repetitions: usize,
    /// Sample standard deviation of `total_ms` across repetitions.
    pub total_ms_std: f64,
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

impl QueryRecord {
    pub fn new(
        selectivity: f64,
        max_entries: usize,
        alpha_target: f64,
        query_id: usize,
        variant: Variant,
        q: &LabeledQuery,
        reps: &[CostReport],
    ) -> Self {
        let n = reps.len() as f64;
        let cost = &reps[0];
        let predict_ms = reps.iter().map(|r| r.predict_ms).sum::<f64>() / n;
        let cpu_ms = reps.iter().map(|r| r.cpu_ms).sum::<f64>() / n;
        let totals: Vec<f64> = reps.iter().map(|r| r.total_ms).collect();
        Self {
            selectivity,
            max_entries,
            alpha_target,
            query_id,
            variant,
            route: cost.route.as_str().to_string(),
            path: cost
                .path
                .map(|p| p.as_str().to_string())
                .unwrap_or_default(),
            alpha: q.alpha,
            tn: q.tn,
            vn: q.vn,
            result_count: cost.result_count,
            leaf_accesses: cost.leaf_accesses,
            io_ms: cost.io_ms,
            predict_ms,
            cpu_ms,
            total_ms: predict_ms + cpu_ms + cost.io_ms,
            repetitions: reps.len(),
            total_ms_std: sample_std(&totals),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeRow {
    pub selectivity: f64,
    pub max_entries: usize,
    pub alpha_target: f64,
    pub queries: usize,
    pub grid_dim: usize,
    pub model_count: usize,
    pub training_fit: f64,
    pub rtree_bytes: usize,
    pub aitree_bytes: usize,
    pub router_bytes: usize,
    /// The AI-tree was trained on all buckets together and is shared.
    pub union: bool,
    /// Router accuracy on its held-out split, and the majority-class baseline.
    pub router_accuracy: f64,
    pub router_baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub selectivity: f64,
    pub max_entries: usize,
    pub alpha_target: f64,
    pub variant: Variant,
    pub queries: usize,
    pub mean_total_ms: f64,
    /// Standard deviation of `mean_total_ms` due to repetition noise,
    /// treating queries as independent.
    pub std_total_ms: f64,
    pub median_total_ms: f64,
    pub mean_io_ms: f64,
    pub mean_cpu_ms: f64,
    pub mean_predict_ms: f64,
    pub mean_leaf_accesses: f64,
    pub routed_ai: usize,
    pub predicted: usize,
    pub fallback_empty: usize,
    pub fallback_mispredict: usize,
    /// R-tree mean total time over this variant's mean total time.
    pub speedup_vs_rtree: f64,
}

fn group_key(r: &QueryRecord) -> (f64, usize, f64, Variant) {
    (r.selectivity, r.max_entries, r.alpha_target, r.variant)
}

fn cmp_key(a: &(f64, usize, f64, Variant), b: &(f64, usize, f64, Variant)) -> Ordering {
    a.0.total_cmp(&b.0)
        .then(a.1.cmp(&b.1))
        .then(a.2.total_cmp(&b.2))
        .then(a.3.cmp(&b.3))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// One row per (selectivity, node capacity, alpha target, variant), sorted.
pub fn aggregate(records: &[QueryRecord]) -> Vec<AggregateRow> {
    let mut sorted: Vec<&QueryRecord> = records.iter().collect();
    sorted.sort_by(|a, b| cmp_key(&group_key(a), &group_key(b)).then(a.query_id.cmp(&b.query_id)));
    let mut rows: Vec<AggregateRow> = Vec::new();
    for group in sorted.chunk_by(|a, b| cmp_key(&group_key(a), &group_key(b)) == Ordering::Equal) {
        let first = group[0];
        let col = |f: fn(&QueryRecord) -> f64| group.iter().map(|r| f(r)).collect::<Vec<_>>();
        let totals = col(|r| r.total_ms);
        let count_path = |p: &str| group.iter().filter(|r| r.path == p).count();
        rows.push(AggregateRow {
            selectivity: first.selectivity,
            max_entries: first.max_entries,
            alpha_target: first.alpha_target,
            variant: first.variant,
            queries: group.len(),
            mean_total_ms: mean(&totals),
            std_total_ms: group
                .iter()
                .map(|r| r.total_ms_std.powi(2) / r.repetitions.max(1) as f64)
                .sum::<f64>()
                .sqrt()
                / group.len() as f64,
            median_total_ms: median(&totals),
            mean_io_ms: mean(&col(|r| r.io_ms)),
            mean_cpu_ms: mean(&col(|r| r.cpu_ms)),
            mean_predict_ms: mean(&col(|r| r.predict_ms)),
            mean_leaf_accesses: mean(&col(|r| r.leaf_accesses as f64)),
            routed_ai: group.iter().filter(|r| r.route == "ai").count(),
            predicted: count_path("predicted"),
            fallback_empty: count_path("fallback_empty"),
            fallback_mispredict: count_path("fallback_mispredict"),
            speedup_vs_rtree: f64::NAN,
        });
    }
    let baselines: Vec<(f64, usize, f64, f64)> = rows
        .iter()
        .filter(|r| r.variant == Variant::Rtree)
        .map(|r| {
            (
                r.selectivity,
                r.max_entries,
                r.alpha_target,
                r.mean_total_ms,
            )
        })
        .collect();
    for row in &mut rows {
        if let Some(b) = baselines
            .iter()
            .find(|b| b.0 == row.selectivity && b.1 == row.max_entries && b.2 == row.alpha_target)
        {
            row.speedup_vs_rtree = b.3 / row.mean_total_ms;
        }
    }
    rows
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let data_err = |message: String| Error::Data {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| data_err(e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| data_err(e.to_string())))
        .collect()
}

/// Fixed-width text table of aggregate rows.
pub fn render_table(rows: &[AggregateRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>11} {:>5} {:>6} {:>7} {:>6} {:>12} {:>9} {:>12} {:>10} {:>8} {:>9}",
        "selectivity",
        "M",
        "alpha",
        "variant",
        "n",
        "mean_ms",
        "+-std",
        "median_ms",
        "leaves",
        "speedup",
        "fallback"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>11} {:>5} {:>6} {:>7} {:>6} {:>12.3} {:>9.3} {:>12.3} {:>10.2} {:>8.3} {:>9}",
            r.selectivity,
            r.max_entries,
            r.alpha_target,
            r.variant.as_str(),
            r.queries,
            r.mean_total_ms,
            r.std_total_ms,
            r.median_total_ms,
            r.mean_leaf_accesses,
            r.speedup_vs_rtree,
            r.fallback_empty + r.fallback_mispredict
        );
    }
    s
}

pub fn render_sizes(rows: &[SizeRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>11} {:>5} {:>6} {:>5} {:>7} {:>12} {:>12} {:>12} {:>8} {:>8} {:>8}",
        "selectivity",
        "M",
        "alpha",
        "grid",
        "fit",
        "rtree_bytes",
        "aitree_bytes",
        "router_bytes",
        "ratio",
        "rf_acc",
        "rf_base"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>11} {:>5} {:>6} {:>5} {:>7.4} {:>12} {:>12} {:>12} {:>8.4} {:>8.4} {:>8.4}",
            r.selectivity,
            r.max_entries,
            r.alpha_target,
            format!("{0}x{0}", r.grid_dim),
            r.training_fit,
            r.rtree_bytes,
            r.aitree_bytes,
            r.router_bytes,
            (r.aitree_bytes + r.router_bytes) as f64 / r.rtree_bytes as f64,
            r.router_accuracy,
            r.router_baseline
        );
    }
    s
}

/// Writes the per-query log, the size table and their summaries into `dir`.
pub fn write_bench_outputs(
    dir: &Path,
    records: &[QueryRecord],
    sizes: &[SizeRow],
) -> Result<Vec<AggregateRow>> {
    let aggregates = aggregate(records);
    write_csv(&dir.join(QUERIES_FILE), records)?;
    write_csv(&dir.join(SIZES_FILE), sizes)?;
    write_csv(&dir.join(SUMMARY_CSV), &aggregates)?;
    fs::write(
        dir.join(SUMMARY_TXT),
        format!("{}\n{}", render_table(&aggregates), render_sizes(sizes)),
    )?;
    Ok(aggregates)
}

/// Merges the bench outputs found in `inputs` into figure-ready series in
/// `out`. Every missing log is reported at once.
pub fn merge_reports(inputs: &[PathBuf], out: &Path) -> Result<Vec<AggregateRow>> {
    let missing: Vec<String> = inputs
        .iter()
        .flat_map(|d| [d.join(QUERIES_FILE), d.join(SIZES_FILE)])
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Data {
            path: out.to_path_buf(),
            message: format!("missing bench logs: {}", missing.join(", ")),
        });
    }
    let mut records = Vec::new();
    let mut sizes: Vec<SizeRow> = Vec::new();
    for d in inputs {
        records.extend(read_csv::<QueryRecord>(&d.join(QUERIES_FILE))?);
        sizes.extend(read_csv::<SizeRow>(&d.join(SIZES_FILE))?);
    }
    sizes.sort_by(|a, b| {
        a.selectivity
            .total_cmp(&b.selectivity)
            .then(a.max_entries.cmp(&b.max_entries))
            .then(a.alpha_target.total_cmp(&b.alpha_target))
    });
    sizes.dedup();
    let aggregates = aggregate(&records);
    write_csv(&out.join("figures.csv"), &aggregates)?;
    write_csv(&out.join("model_sizes.csv"), &sizes)?;
    fs::write(
        out.join(SUMMARY_TXT),
        format!("{}\n{}", render_table(&aggregates), render_sizes(&sizes)),
    )?;
    Ok(aggregates)
}
