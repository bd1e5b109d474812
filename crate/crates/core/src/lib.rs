//! Hybrid spatial index for rectangular range queries: an R-tree paired with
//! a grid of multi-label decision trees that predict which R-tree leaves hold
//! a query's results, and a random-forest router choosing between the two.

pub mod aitree;
pub mod bench;
pub mod error;
pub mod geom;
pub mod hybrid;
pub mod learn;
pub mod persist;
pub mod rtree;
pub mod workload;

pub use aitree::{AiQueryOutcome, AiTree, ModelGrid, QueryPath};
pub use error::{Error, Result};
pub use geom::{Point, Rect};
pub use hybrid::{CostModel, CostReport, HybridIndex, Route};
pub use rtree::{LeafId, QueryTrace, RTree, RTreeConfig};
