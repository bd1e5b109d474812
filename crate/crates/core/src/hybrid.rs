//! The hybrid index: a binary router sends predicted high-overlap queries to
//! the AI-tree and everything else to the R-tree. Cost is accounted as
//! measured CPU and prediction time plus simulated I/O per leaf access.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::aitree::{AiTree, QueryPath};
use crate::error::{Error, Result};
use crate::geom::{Point, Rect};
use crate::learn::RandomForest;
use crate::rtree::RTree;
use crate::workload::binary_label;

pub const DEFAULT_TAU: f64 = 0.75;
pub const DEFAULT_IO_MS_PER_LEAF: f64 = 13.0;
pub const HYBRID_KIND: &str = "hybrid";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub io_ms_per_leaf: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            io_ms_per_leaf: DEFAULT_IO_MS_PER_LEAF,
        }
    }
}

impl CostModel {
    pub fn new(io_ms_per_leaf: f64) -> Result<Self> {
        if !(io_ms_per_leaf > 0.0 && io_ms_per_leaf.is_finite()) {
            return Err(Error::Config(format!(
                "io cost {io_ms_per_leaf} must be positive"
            )));
        }
        Ok(Self { io_ms_per_leaf })
    }

    pub fn io_ms(&self, leaf_accesses: usize) -> f64 {
        leaf_accesses as f64 * self.io_ms_per_leaf
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Ai,
    Rtree,
}

impl Route {
    pub fn from_label(label: u8) -> Self {
        if label == 0 {
            Route::Ai
        } else {
            Route::Rtree
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Route::Ai => "ai",
            Route::Rtree => "rtree",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub route: Route,
    /// AI-tree execution path; `None` for the R-tree.
    pub path: Option<QueryPath>,
    pub predict_ms: f64,
    pub cpu_ms: f64,
    pub leaf_accesses: usize,
    pub io_ms: f64,
    pub total_ms: f64,
    pub result_count: usize,
}

impl CostReport {
    fn new(
        route: Route,
        path: Option<QueryPath>,
        predict_ms: f64,
        cpu_ms: f64,
        leaf_accesses: usize,
        result_count: usize,
        cost: &CostModel,
    ) -> Self {
        let io_ms = cost.io_ms(leaf_accesses);
        Self {
            route,
            path,
            predict_ms,
            cpu_ms,
            leaf_accesses,
            io_ms,
            total_ms: cpu_ms + predict_ms + io_ms,
            result_count,
        }
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Plain R-tree search with cost accounting.
pub fn rtree_query(tree: &RTree, q: &Rect, cost: &CostModel) -> Result<(Vec<Point>, CostReport)> {
    let t = Instant::now();
    let trace = tree.range_query(q)?;
    let cpu = ms_since(t);
    let report = CostReport::new(
        Route::Rtree,
        None,
        0.0,
        cpu,
        trace.leaf_accesses,
        trace.results.len(),
        cost,
    );
    Ok((trace.results, report))
}

/// Stand-alone AI-tree search with cost accounting.
pub fn aitree_query(ai: &AiTree, q: &Rect, cost: &CostModel) -> Result<(Vec<Point>, CostReport)> {
    q.validate()?;
    run_ai(ai, q, 0.0, cost)
}

fn run_ai(
    ai: &AiTree,
    q: &Rect,
    router_ms: f64,
    cost: &CostModel,
) -> Result<(Vec<Point>, CostReport)> {
    let t = Instant::now();
    let predicted = ai.predict_leaves(q);
    let predict = ms_since(t);
    let t = Instant::now();
    let out = ai.query_with_prediction(q, predicted)?;
    let cpu = ms_since(t);
    let report = CostReport::new(
        Route::Ai,
        Some(out.path),
        router_ms + predict,
        cpu,
        out.leaf_accesses,
        out.results.len(),
        cost,
    );
    Ok((out.results, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteCostDelta {
    pub taken: CostReport,
    pub alternative: CostReport,
    /// Route implied by the query's true overlap ratio.
    pub correct_route: Route,
    pub misrouted: bool,
    /// `taken - alternative`.
    pub delta_leaf_accesses: i64,
    pub delta_io_ms: f64,
    pub delta_total_ms: f64,
}

/// AI-tree + R-tree behind a trained router. Immutable once built.
#[derive(Debug, Clone, Copy)]
pub struct HybridIndex<'a> {
    ai: &'a AiTree,
    rtree: &'a RTree,
    router: &'a RandomForest,
    tau: f64,
    cost_model: CostModel,
}

impl<'a> HybridIndex<'a> {
    pub fn new(
        ai: &'a AiTree,
        rtree: &'a RTree,
        router: &'a RandomForest,
        tau: f64,
        cost_model: CostModel,
    ) -> Result<Self> {
        if !std::ptr::eq(&**ai.rtree(), rtree) {
            return Err(Error::Config(
                "AI-tree and hybrid index must share one R-tree".into(),
            ));
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::Config(format!("tau {tau} not in (0, 1)")));
        }
        CostModel::new(cost_model.io_ms_per_leaf)?;
        Ok(Self {
            ai,
            rtree,
            router,
            tau,
            cost_model,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn cost_model(&self) -> CostModel {
        self.cost_model
    }

    pub fn route(&self, q: &Rect) -> Route {
        Route::from_label(self.router.predict(&q.features()))
    }

    pub fn query(&self, q: &Rect) -> Result<(Vec<Point>, CostReport)> {
        q.validate()?;
        let t = Instant::now();
        let route = self.route(q);
        let router_ms = ms_since(t);
        self.execute(route, q, router_ms)
    }

    fn execute(&self, route: Route, q: &Rect, router_ms: f64) -> Result<(Vec<Point>, CostReport)> {
        match route {
            Route::Ai => run_ai(self.ai, q, router_ms, &self.cost_model),
            Route::Rtree => {
                let (results, mut report) = rtree_query(self.rtree, q, &self.cost_model)?;
                report.predict_ms = router_ms;
                report.total_ms += router_ms;
                Ok((results, report))
            }
        }
    }

    /// Cost of the route the router takes minus the cost of the other route.
    pub fn mispredicted_route_cost(&self, q: &Rect, true_alpha: f64) -> Result<RouteCostDelta> {
        q.validate()?;
        let t = Instant::now();
        let taken_route = self.route(q);
        let router_ms = ms_since(t);
        let other = match taken_route {
            Route::Ai => Route::Rtree,
            Route::Rtree => Route::Ai,
        };
        let (_, taken) = self.execute(taken_route, q, router_ms)?;
        let (_, alternative) = self.execute(other, q, router_ms)?;
        let correct_route = Route::from_label(binary_label(true_alpha, self.tau));
        Ok(RouteCostDelta {
            taken,
            alternative,
            correct_route,
            misrouted: correct_route != taken_route,
            delta_leaf_accesses: taken.leaf_accesses as i64 - alternative.leaf_accesses as i64,
            delta_io_ms: taken.io_ms - alternative.io_ms,
            delta_total_ms: taken.total_ms - alternative.total_ms,
        })
    }
}

/// Persisted description of a hybrid index: which artifacts it combines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridManifest {
    pub rtree_snapshot: String,
    pub rtree_fingerprint: String,
    /// `(alpha target, bundle file)` per trained AI-tree.
    pub aitree_bundles: Vec<(f64, String)>,
    pub router_model: String,
    pub tau: f64,
    pub cost_model: CostModel,
}
