//! Bagged random forest for the binary high/low-overlap router.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cart::{self, Features, GrowOptions, RawNode};
use crate::error::{Error, Result};
use crate::workload::BinaryExample;

pub const DEFAULT_TREES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `floor(sqrt(4))` by default.
    pub features_per_split: usize,
    pub seed: u64,
}

impl ForestParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            n_trees: DEFAULT_TREES,
            features_per_split: 2,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ForestNode {
    Split {
        feature: u8,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf(u8),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryTree {
    pub nodes: Vec<ForestNode>,
}

impl BinaryTree {
    pub fn predict(&self, features: &Features) -> u8 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                ForestNode::Split {
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
                ForestNode::Leaf(c) => return *c,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub params: ForestParams,
    pub n_examples: usize,
    pub trees: Vec<BinaryTree>,
}

impl RandomForest {
    pub fn train(examples: &[BinaryExample], params: ForestParams) -> Result<Self> {
        if params.n_trees == 0 || params.features_per_split == 0 {
            return Err(Error::Config(
                "forest needs at least one tree and one feature per split".into(),
            ));
        }
        let ones = examples.iter().filter(|e| e.label == 1).count();
        if ones == 0 || ones == examples.len() {
            return Err(Error::Training(format!(
                "router training data has a single class ({} examples, {ones} low-overlap); \
                 widen the workload so both high- and low-overlap queries are present",
                examples.len()
            )));
        }
        let x: Vec<Features> = examples.iter().map(|e| e.features).collect();
        let y: Vec<Vec<u32>> = examples
            .iter()
            .map(|e| if e.label == 1 { vec![0] } else { Vec::new() })
            .collect();
        let n = examples.len();
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                rng.set_stream(t as u64);
                let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let raw = cart::grow(
                    &x,
                    &y,
                    sample,
                    1,
                    GrowOptions {
                        max_depth: None,
                        min_samples_split: 2,
                        features_per_split: params.features_per_split,
                        rng: Some(&mut rng),
                    },
                );
                BinaryTree {
                    nodes: raw
                        .into_iter()
                        .map(|node| match node {
                            RawNode::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            } => ForestNode::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            },
                            RawNode::Leaf { n, counts } => {
                                let pos = counts.first().map_or(0, |&(_, c)| c);
                                ForestNode::Leaf(u8::from(2 * pos > n))
                            }
                        })
                        .collect(),
                }
            })
            .collect();
        Ok(Self {
            params,
            n_examples: n,
            trees,
        })
    }

    /// `(votes for 0, votes for 1)`.
    pub fn votes(&self, features: &Features) -> (usize, usize) {
        let ones = self
            .trees
            .iter()
            .filter(|t| t.predict(features) == 1)
            .count();
        (self.trees.len() - ones, ones)
    }

    /// Majority vote; a tie goes to 0.
    pub fn predict(&self, features: &Features) -> u8 {
        let (zeros, ones) = self.votes(features);
        u8::from(ones > zeros)
    }

    pub fn node_count(&self) -> usize {
        self.trees.iter().map(|t| t.nodes.len()).sum()
    }

    /// 16 header bytes (tree count, features per split, seed) plus the packed
    /// encoding of every tree (see [`super::pack`]).
    pub fn size_bytes(&self) -> usize {
        16 + self
            .trees
            .iter()
            .map(|t| super::pack::pack_binary_tree(t).len())
            .sum::<usize>()
    }

    pub fn accuracy(&self, examples: &[BinaryExample]) -> f64 {
        if examples.is_empty() {
            return 1.0;
        }
        let hits = examples
            .iter()
            .filter(|e| self.predict(&e.features) == e.label)
            .count();
        hits as f64 / examples.len() as f64
    }
}
