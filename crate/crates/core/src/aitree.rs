//! Grid-indexed multi-label models that answer range queries by scanning
//! only the R-tree leaves they predict, falling back to the R-tree itself
//! when the prediction is empty or visibly wrong.

use std::sync::Arc;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point, Rect};
use crate::learn::{Features, LabelSet, MlTreeParams, MultiLabelTree};
use crate::persist;
use crate::rtree::{LeafId, RTree};
use crate::workload::{make_multilabel_training, LabeledQuery, TrainingExample};

pub const DEFAULT_MAX_GRID: usize = 20;
pub const AITREE_KIND: &str = "aitree";

/// `g x g` equal cells over the dataset bounds, each with an optional model.
///
/// Cell `(col, row)` has index `row * g + col`. For tiling, a cell owns its
/// low edges and the last row/column also owns the global max edges; query
/// routing uses closed intersection, so a query touching a shared edge
/// consults both neighbors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelGrid {
    pub grid_dim: usize,
    pub bounds: Rect,
    pub leaf_count: usize,
    pub cells: Vec<Option<MultiLabelTree>>,
}

impl ModelGrid {
    fn empty(grid_dim: usize, bounds: Rect, leaf_count: usize) -> Self {
        Self {
            grid_dim,
            bounds,
            leaf_count,
            cells: vec![None; grid_dim * grid_dim],
        }
    }

    fn edge(lo: f64, hi: f64, i: usize, g: usize) -> f64 {
        if i >= g {
            hi
        } else {
            lo + (hi - lo) * i as f64 / g as f64
        }
    }

    pub fn cell_rect(&self, index: usize) -> Rect {
        let g = self.grid_dim;
        let (col, row) = (index % g, index / g);
        let b = &self.bounds;
        Rect {
            xmin: Self::edge(b.xmin, b.xmax, col, g),
            xmax: Self::edge(b.xmin, b.xmax, col + 1, g),
            ymin: Self::edge(b.ymin, b.ymax, row, g),
            ymax: Self::edge(b.ymin, b.ymax, row + 1, g),
        }
    }

    /// Column or row range that may touch `[lo, hi]` along one axis.
    fn axis_range(&self, lo: f64, hi: f64, min: f64, max: f64) -> (usize, usize) {
        let g = self.grid_dim;
        let span = max - min;
        if span <= 0.0 {
            return (0, g - 1);
        }
        let at = |v: f64| {
            (((v - min) / span) * g as f64)
                .floor()
                .clamp(0.0, (g - 1) as f64) as usize
        };
        (at(lo).saturating_sub(1), (at(hi) + 1).min(g - 1))
    }

    /// Cells whose (closed) rectangle intersects `q`, ascending.
    pub fn overlapping_cells(&self, q: &Rect) -> Vec<usize> {
        if !self.bounds.intersects(q) {
            return Vec::new();
        }
        let b = &self.bounds;
        let (c0, c1) = self.axis_range(q.xmin, q.xmax, b.xmin, b.xmax);
        let (r0, r1) = self.axis_range(q.ymin, q.ymax, b.ymin, b.ymax);
        let g = self.grid_dim;
        let mut out = Vec::new();
        for row in r0..=r1 {
            for col in c0..=c1 {
                let idx = row * g + col;
                if self.cell_rect(idx).intersects(q) {
                    out.push(idx);
                }
            }
        }
        out
    }

    /// Owning cell of a point under half-open tiling; `None` outside the bounds.
    pub fn cell_containing(&self, p: &Point) -> Option<usize> {
        if !self.bounds.contains_point(p) {
            return None;
        }
        let g = self.grid_dim;
        let owner = |v: f64, lo: f64, hi: f64| {
            let mut i = (((v - lo) / (hi - lo)) * g as f64)
                .floor()
                .clamp(0.0, (g - 1) as f64) as usize;
            while i + 1 < g && v >= Self::edge(lo, hi, i + 1, g) {
                i += 1;
            }
            while i > 0 && v < Self::edge(lo, hi, i, g) {
                i -= 1;
            }
            i
        };
        let b = &self.bounds;
        let col = if b.width() > 0.0 {
            owner(p.x, b.xmin, b.xmax)
        } else {
            0
        };
        let row = if b.height() > 0.0 {
            owner(p.y, b.ymin, b.ymax)
        } else {
            0
        };
        Some(row * g + col)
    }

    pub fn model_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// Union of the predictions of every model whose cell overlaps `q`.
    pub fn predict(&self, q: &Rect) -> Vec<LeafId> {
        let f = q.features();
        let mut out: Vec<LeafId> = self
            .overlapping_cells(q)
            .into_iter()
            .filter_map(|c| self.cells[c].as_ref())
            .flat_map(|m| m.predict(&f).iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn size_bytes(&self) -> usize {
        self.cells
            .iter()
            .flatten()
            .map(MultiLabelTree::size_bytes)
            .sum()
    }

    /// Trains one model per cell that at least one query overlaps.
    fn train(
        grid_dim: usize,
        bounds: Rect,
        leaf_count: usize,
        examples: &[TrainingExample],
        params: MlTreeParams,
    ) -> Result<Self> {
        let mut grid = Self::empty(grid_dim, bounds, leaf_count);
        let mut per_cell: Vec<Vec<usize>> = vec![Vec::new(); grid_dim * grid_dim];
        for (i, e) in examples.iter().enumerate() {
            let r = Rect::from_features(e.features)?;
            for c in grid.overlapping_cells(&r) {
                per_cell[c].push(i);
            }
        }
        let models: Vec<Option<MultiLabelTree>> = per_cell
            .par_iter()
            .map(|idx| {
                if idx.is_empty() {
                    return Ok(None);
                }
                let x: Vec<Features> = idx.iter().map(|&i| examples[i].features).collect();
                let y: Vec<LabelSet> = idx.iter().map(|&i| examples[i].labels.clone()).collect();
                MultiLabelTree::train(&x, &y, params).map(Some)
            })
            .collect::<Result<_>>()?;
        grid.cells = models;
        Ok(grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryPath {
    Predicted,
    FallbackEmpty,
    FallbackMispredict,
}

impl QueryPath {
    pub fn as_str(&self) -> &'static str {
        match self {
            QueryPath::Predicted => "predicted",
            QueryPath::FallbackEmpty => "fallback_empty",
            QueryPath::FallbackMispredict => "fallback_mispredict",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AiQueryOutcome {
    pub results: Vec<Point>,
    pub leaf_accesses: usize,
    pub path: QueryPath,
    pub predicted_leaf_ids: Vec<LeafId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_grid: usize,
    pub tree: MlTreeParams,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_grid: DEFAULT_MAX_GRID,
            tree: MlTreeParams::default(),
        }
    }
}

/// Fitted learned index bound to the R-tree it was trained against.
#[derive(Debug, Clone)]
pub struct AiTree {
    grid: ModelGrid,
    rtree: Arc<RTree>,
    training_fit: f64,
    workload_fingerprint: String,
}

/// Everything needed to restore an [`AiTree`] except the R-tree itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AiTreeBundle {
    pub grid: ModelGrid,
    pub training_fit: f64,
    pub workload_fingerprint: String,
    pub rtree_fingerprint: String,
}

impl AiTree {
    /// Sweeps `g = 2..=max_grid`, stopping at the first grid whose full
    /// prediction pipeline reproduces every training query's true leaf set.
    /// If none does, keeps the best-scoring grid and warns.
    pub fn fit(
        queries: &[LabeledQuery],
        rtree: Arc<RTree>,
        bounds: Rect,
        opts: FitOptions,
    ) -> Result<Self> {
        if queries.is_empty() {
            return Err(Error::Training("no training queries".into()));
        }
        if opts.max_grid < 2 {
            return Err(Error::Config(format!("max grid {} < 2", opts.max_grid)));
        }
        bounds.validate()?;
        let leaf_count = rtree.leaf_count()?;
        let examples = make_multilabel_training(queries, leaf_count)?;
        if examples.is_empty() {
            return Err(Error::Training("no training query has a true leaf".into()));
        }
        let truth: Vec<&[LeafId]> = queries
            .iter()
            .filter(|q| !q.true_leaf_ids.is_empty())
            .map(|q| q.true_leaf_ids.as_slice())
            .collect();
        let mut best: Option<(f64, ModelGrid)> = None;
        for g in 2..=opts.max_grid {
            let grid = ModelGrid::train(g, bounds, leaf_count, &examples, opts.tree)?;
            let hits = examples
                .iter()
                .zip(&truth)
                .filter(|(e, t)| {
                    let r = Rect::from_features(e.features).expect("validated");
                    grid.predict(&r) == **t
                })
                .count();
            let fit = hits as f64 / examples.len() as f64;
            if best.as_ref().is_none_or(|(b, _)| fit > *b) {
                best = Some((fit, grid));
            }
            if fit == 1.0 {
                break;
            }
        }
        let (training_fit, grid) = best.expect("at least one grid size tried");
        if training_fit < 1.0 {
            warn!(
                "AI-tree fit {:.4} < 1 at best grid {g}x{g}; fallbacks keep answers exact",
                training_fit,
                g = grid.grid_dim
            );
        }
        Ok(Self {
            grid,
            rtree,
            training_fit,
            workload_fingerprint: persist::fingerprint(&queries)?,
        })
    }

    pub fn grid(&self) -> &ModelGrid {
        &self.grid
    }

    pub fn rtree(&self) -> &Arc<RTree> {
        &self.rtree
    }

    pub fn training_fit(&self) -> f64 {
        self.training_fit
    }

    pub fn grid_dim(&self) -> usize {
        self.grid.grid_dim
    }

    pub fn workload_fingerprint(&self) -> &str {
        &self.workload_fingerprint
    }

    pub fn overlapping_cells(&self, q: &Rect) -> Vec<usize> {
        self.grid.overlapping_cells(q)
    }

    pub fn predict_leaves(&self, q: &Rect) -> Vec<LeafId> {
        self.grid.predict(q)
    }

    pub fn query(&self, q: &Rect) -> Result<AiQueryOutcome> {
        q.validate()?;
        let predicted = self.predict_leaves(q);
        self.query_with_prediction(q, predicted)
    }

    /// Executes `q` given an already computed prediction.
    pub fn query_with_prediction(
        &self,
        q: &Rect,
        predicted: Vec<LeafId>,
    ) -> Result<AiQueryOutcome> {
        if predicted.is_empty() {
            let trace = self.rtree.range_query(q)?;
            return Ok(AiQueryOutcome {
                results: trace.results,
                leaf_accesses: trace.leaf_accesses,
                path: QueryPath::FallbackEmpty,
                predicted_leaf_ids: predicted,
            });
        }
        let mut results = Vec::new();
        let mut accesses = 0;
        let mut mispredicted = false;
        for &id in &predicted {
            let (found, cost) = self.rtree.scan_leaf(id, q)?;
            accesses += cost;
            if found.is_empty() {
                mispredicted = true;
                break;
            }
            results.extend(found);
        }
        if mispredicted {
            let trace = self.rtree.range_query(q)?;
            return Ok(AiQueryOutcome {
                results: trace.results,
                leaf_accesses: predicted.len() + trace.leaf_accesses,
                path: QueryPath::FallbackMispredict,
                predicted_leaf_ids: predicted,
            });
        }
        Ok(AiQueryOutcome {
            results,
            leaf_accesses: accesses,
            path: QueryPath::Predicted,
            predicted_leaf_ids: predicted,
        })
    }

    pub fn size_bytes(&self) -> usize {
        self.grid.size_bytes()
    }

    pub fn to_bundle(&self) -> Result<AiTreeBundle> {
        Ok(AiTreeBundle {
            grid: self.grid.clone(),
            training_fit: self.training_fit,
            workload_fingerprint: self.workload_fingerprint.clone(),
            rtree_fingerprint: persist::fingerprint(&*self.rtree)?,
        })
    }

    /// Rebinds a bundle to its R-tree, rejecting a tree or workload other than
    /// the ones it was trained on.
    pub fn from_bundle(
        bundle: AiTreeBundle,
        rtree: Arc<RTree>,
        workload: Option<&[LabeledQuery]>,
    ) -> Result<Self> {
        let fp = persist::fingerprint(&*rtree)?;
        if fp != bundle.rtree_fingerprint {
            return Err(Error::Fingerprint(format!(
                "AI-tree was trained on R-tree {} but was given {fp}",
                bundle.rtree_fingerprint
            )));
        }
        if let Some(w) = workload {
            let wfp = persist::fingerprint(&w)?;
            if wfp != bundle.workload_fingerprint {
                return Err(Error::Fingerprint(format!(
                    "AI-tree was trained on workload {} but was given {wfp}",
                    bundle.workload_fingerprint
                )));
            }
        }
        Ok(Self {
            grid: bundle.grid,
            rtree,
            training_fit: bundle.training_fit,
            workload_fingerprint: bundle.workload_fingerprint,
        })
    }
}

/// Sorts points into a canonical order for result-set comparison.
pub fn canonical(mut points: Vec<Point>) -> Vec<Point> {
    points.sort_by_key(Point::key);
    points
}
