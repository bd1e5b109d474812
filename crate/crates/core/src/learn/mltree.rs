//! Multi-label decision tree, grown without pruning so it memorizes its
//! training workload.

use serde::{Deserialize, Serialize};

use super::cart::{self, Features, GrowOptions, RawNode, N_FEATURES};
use super::labels::LabelSet;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_DEPTH: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlTreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
}

impl Default for MlTreeParams {
    fn default() -> Self {
        Self {
            max_depth: DEFAULT_MAX_DEPTH,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MlNode {
    Split {
        feature: u8,
        threshold: f64,
        left: u32,
        right: u32,
    },
    /// Label ids predicted at this leaf, ascending. May be empty.
    Leaf(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLabelTree {
    pub label_count: usize,
    pub params: MlTreeParams,
    pub n_examples: usize,
    pub nodes: Vec<MlNode>,
}

impl MultiLabelTree {
    pub fn train(x: &[Features], y: &[LabelSet], params: MlTreeParams) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Training("empty training set".into()));
        }
        if x.len() != y.len() {
            return Err(Error::Training(format!(
                "{} feature rows but {} label rows",
                x.len(),
                y.len()
            )));
        }
        let label_count = y[0].len();
        if let Some(bad) = y.iter().find(|l| l.len() != label_count) {
            return Err(Error::Training(format!(
                "inconsistent label lengths: {} and {}",
                label_count,
                bad.len()
            )));
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InputDomain("non-finite training feature".into()));
        }
        let sparse: Vec<Vec<u32>> = y.iter().map(LabelSet::ids).collect();
        let raw = cart::grow(
            x,
            &sparse,
            (0..x.len()).collect(),
            label_count,
            GrowOptions {
                max_depth: Some(params.max_depth),
                min_samples_split: params.min_samples_split,
                features_per_split: N_FEATURES,
                rng: None,
            },
        );
        let nodes = raw
            .into_iter()
            .map(|n| match n {
                RawNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => MlNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                },
                // Per-label majority, ties set.
                RawNode::Leaf { n, counts } => MlNode::Leaf(
                    counts
                        .into_iter()
                        .filter(|&(_, c)| 2 * c >= n)
                        .map(|(l, _)| l)
                        .collect(),
                ),
            })
            .collect();
        Ok(Self {
            label_count,
            params,
            n_examples: x.len(),
            nodes,
        })
    }

    /// Label ids at the leaf reached by `features`, ascending.
    pub fn predict(&self, features: &Features) -> &[u32] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                MlNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if features[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                MlNode::Leaf(ids) => return ids,
            }
        }
    }

    pub fn predict_set(&self, features: &Features) -> LabelSet {
        LabelSet::from_ids(self.label_count, self.predict(features).iter().copied())
            .expect("stored labels are in range")
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        let mut max = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            max = max.max(d);
            if let MlNode::Split { left, right, .. } = &self.nodes[i] {
                stack.push((*left as usize, d + 1));
                stack.push((*right as usize, d + 1));
            }
        }
        max
    }

    /// Length of the packed encoding (see [`super::pack`]): 16 header bytes,
    /// 13 per split, and 5 + 4 per predicted label for each leaf.
    pub fn size_bytes(&self) -> usize {
        super::pack::pack_mltree(self).len()
    }
}

/// Fraction of rows whose predicted label set equals the true set exactly.
pub fn subset_accuracy(predicted: &[LabelSet], truth: &[LabelSet]) -> f64 {
    if truth.is_empty() {
        return 1.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}
