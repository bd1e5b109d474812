//! Supervised learners written for this index: a multi-label decision tree
//! that memorizes which leaves answer each training query, and a random
//! forest that routes queries between the learned path and the R-tree.

mod cart;
pub mod forest;
pub mod labels;
pub mod mltree;
pub mod pack;

pub use cart::{Features, N_FEATURES};
pub use forest::{ForestParams, RandomForest};
pub use labels::LabelSet;
pub use mltree::{subset_accuracy, MlTreeParams, MultiLabelTree};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub subset_accuracy: f64,
    pub binary_accuracy: f64,
    pub size_bytes: usize,
}
