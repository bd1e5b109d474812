//! Compact binary encoding of trained trees, used for size reporting.
//!
//! Nodes are written in preorder so the left child of a split is always the
//! next node and only the right child's ordinal is stored:
//!
//! - split: feature `u8` (0..=3), threshold `f64`, right-child ordinal `u32` (13 bytes)
//! - multi-label leaf: tag `0xFF`, label count `u32`, labels `u32` each
//! - forest leaf: tag `0xFE` (class 0) or `0xFF` (class 1), one byte
//!
//! All integers and floats are little-endian. Thresholds keep their exact bits.

use super::forest::{BinaryTree, ForestNode};
use super::mltree::{MlNode, MultiLabelTree};
use crate::error::{Error, Result};

const LEAF_TAG: u8 = 0xFF;
const CLASS0_TAG: u8 = 0xFE;

trait Packable {
    fn split(&self) -> Option<(u8, f64, u32, u32)>;
    fn write_leaf(&self, out: &mut Vec<u8>);
}

impl Packable for MlNode {
    fn split(&self) -> Option<(u8, f64, u32, u32)> {
        match *self {
            MlNode::Split {
                feature,
                threshold,
                left,
                right,
            } => Some((feature, threshold, left, right)),
            MlNode::Leaf(_) => None,
        }
    }

    fn write_leaf(&self, out: &mut Vec<u8>) {
        if let MlNode::Leaf(ids) = self {
            out.push(LEAF_TAG);
            out.extend_from_slice(&(ids.len() as u32).to_le_bytes());
            for id in ids {
                out.extend_from_slice(&id.to_le_bytes());
            }
        }
    }
}

impl Packable for ForestNode {
    fn split(&self) -> Option<(u8, f64, u32, u32)> {
        match *self {
            ForestNode::Split {
                feature,
                threshold,
                left,
                right,
            } => Some((feature, threshold, left, right)),
            ForestNode::Leaf(_) => None,
        }
    }

    fn write_leaf(&self, out: &mut Vec<u8>) {
        if let ForestNode::Leaf(c) = self {
            out.push(if *c == 0 { CLASS0_TAG } else { LEAF_TAG });
        }
    }
}

fn pack_nodes<N: Packable>(nodes: &[N], out: &mut Vec<u8>) {
    // Preorder ordinal of every node, then emit.
    let mut ordinal = vec![0u32; nodes.len()];
    let mut order = Vec::with_capacity(nodes.len());
    let mut stack = vec![0usize];
    while let Some(i) = stack.pop() {
        ordinal[i] = order.len() as u32;
        order.push(i);
        if let Some((_, _, l, r)) = nodes[i].split() {
            stack.push(r as usize);
            stack.push(l as usize);
        }
    }
    for i in order {
        match nodes[i].split() {
            Some((f, t, _, r)) => {
                out.push(f);
                out.extend_from_slice(&t.to_le_bytes());
                out.extend_from_slice(&ordinal[r as usize].to_le_bytes());
            }
            None => nodes[i].write_leaf(out),
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::InputDomain("truncated packed model".into()))?;
        self.pos = end;
        Ok(s.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

/// Header: label count, depth limit, min samples per split, node count (`u32` each).
pub fn pack_mltree(tree: &MultiLabelTree) -> Vec<u8> {
    let mut out = Vec::new();
    for v in [
        tree.label_count,
        tree.params.max_depth,
        tree.params.min_samples_split,
        tree.nodes.len(),
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    pack_nodes(&tree.nodes, &mut out);
    out
}

pub fn unpack_mltree(bytes: &[u8]) -> Result<MultiLabelTree> {
    let mut r = Reader { bytes, pos: 0 };
    let label_count = r.u32()? as usize;
    let max_depth = r.u32()? as usize;
    let min_samples_split = r.u32()? as usize;
    let n = r.u32()? as usize;
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let tag = r.u8()?;
        if tag == LEAF_TAG {
            let k = r.u32()? as usize;
            let ids = (0..k).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            nodes.push(MlNode::Leaf(ids));
        } else {
            let threshold = r.f64()?;
            let right = r.u32()?;
            nodes.push(MlNode::Split {
                feature: tag,
                threshold,
                left: i as u32 + 1,
                right,
            });
        }
    }
    Ok(MultiLabelTree {
        label_count,
        params: super::MlTreeParams {
            max_depth,
            min_samples_split,
        },
        n_examples: 0,
        nodes,
    })
}

/// Header: node count (`u32`).
pub fn pack_binary_tree(tree: &BinaryTree) -> Vec<u8> {
    let mut out = (tree.nodes.len() as u32).to_le_bytes().to_vec();
    pack_nodes(&tree.nodes, &mut out);
    out
}

pub fn unpack_binary_tree(bytes: &[u8]) -> Result<BinaryTree> {
    let mut r = Reader { bytes, pos: 0 };
    let n = r.u32()? as usize;
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let tag = r.u8()?;
        match tag {
            CLASS0_TAG => nodes.push(ForestNode::Leaf(0)),
            LEAF_TAG => nodes.push(ForestNode::Leaf(1)),
            feature => {
                let threshold = r.f64()?;
                let right = r.u32()?;
                nodes.push(ForestNode::Split {
                    feature,
                    threshold,
                    left: i as u32 + 1,
                    right,
                });
            }
        }
    }
    Ok(BinaryTree { nodes })
}
