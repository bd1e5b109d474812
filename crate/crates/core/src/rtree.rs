//! Dynamic Guttman R-tree over points with linear node splitting.
//!
//! Nodes live in an arena and refer to each other by index. After the build
//! phase, [`RTree::assign_leaf_ids`] numbers the leaves in depth-first order;
//! range search then reports which leaves it visited and which of those held
//! results, which is what the learned index is trained on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point, Rect};

/// Fixed per-node footprint used by [`RTree::tree_size_bytes`]: MBR (4 x f64),
/// entry count and kind tag (8), leaf id slot (8).
pub const NODE_HEADER_BYTES: usize = 48;
/// Footprint of one point entry in a leaf.
pub const POINT_ENTRY_BYTES: usize = 16;
/// Footprint of one child reference in an internal node.
pub const CHILD_ENTRY_BYTES: usize = 8;

pub type NodeId = usize;
pub type LeafId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RTreeConfig {
    pub max_entries: usize,
    pub min_entries: usize,
}

impl RTreeConfig {
    /// Config with `m = M / 2`.
    pub fn with_max(max_entries: usize) -> Result<Self> {
        Self::new(max_entries, max_entries / 2)
    }

    pub fn new(max_entries: usize, min_entries: usize) -> Result<Self> {
        let cfg = Self {
            max_entries,
            min_entries,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let ceil_half = self.max_entries.div_ceil(2);
        if self.min_entries < 2 || self.min_entries > ceil_half {
            return Err(Error::Config(format!(
                "need 2 <= m <= ceil(M/2), got M={} m={}",
                self.max_entries, self.min_entries
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    Leaf(Vec<Point>),
    Internal(Vec<NodeId>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// `None` only for the root of an empty tree.
    pub mbr: Option<Rect>,
    pub kind: NodeKind,
    pub leaf_id: Option<LeafId>,
}

impl Node {
    fn empty_leaf() -> Self {
        Self {
            mbr: None,
            kind: NodeKind::Leaf(Vec::new()),
            leaf_id: None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf(_))
    }

    pub fn entry_count(&self) -> usize {
        match &self.kind {
            NodeKind::Leaf(p) => p.len(),
            NodeKind::Internal(c) => c.len(),
        }
    }
}

/// Outcome of an instrumented range search.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryTrace {
    /// Leaves whose MBR intersects the query, in ascending id order.
    pub visited_leaves: Vec<LeafId>,
    /// Visited leaves that contributed at least one result, ascending.
    pub true_leaves: Vec<LeafId>,
    pub results: Vec<Point>,
    pub leaf_accesses: usize,
}

impl QueryTrace {
    pub fn tn(&self) -> usize {
        self.true_leaves.len()
    }

    pub fn vn(&self) -> usize {
        self.visited_leaves.len()
    }

    /// Overlap ratio `TN / VN`; `None` when no leaf was visited.
    pub fn alpha(&self) -> Option<f64> {
        (self.vn() > 0).then(|| self.tn() as f64 / self.vn() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RTree {
    config: RTreeConfig,
    nodes: Vec<Node>,
    root: NodeId,
    len: usize,
    /// Leaf id -> node, present once ids are assigned and no insert has happened since.
    leaves: Option<Vec<NodeId>>,
}

impl RTree {
    pub fn new(config: RTreeConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            nodes: vec![Node::empty_leaf()],
            root: 0,
            len: 0,
            leaves: None,
        })
    }

    /// Inserts every point in order, then assigns leaf ids.
    pub fn build<'a, I: IntoIterator<Item = &'a Point>>(
        config: RTreeConfig,
        points: I,
    ) -> Result<Self> {
        let mut tree = Self::new(config)?;
        for p in points {
            tree.insert(*p)?;
        }
        if !tree.is_empty() {
            tree.assign_leaf_ids()?;
        }
        Ok(tree)
    }

    pub fn config(&self) -> RTreeConfig {
        self.config
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn bounds(&self) -> Option<Rect> {
        self.nodes[self.root].mbr
    }

    pub fn height(&self) -> usize {
        let mut h = 1;
        let mut n = self.root;
        while let NodeKind::Internal(c) = &self.nodes[n].kind {
            h += 1;
            n = c[0];
        }
        h
    }

    pub fn insert(&mut self, p: Point) -> Result<()> {
        if !p.is_finite() {
            return Err(Error::InputDomain(format!(
                "non-finite point ({}, {})",
                p.x, p.y
            )));
        }
        if self.leaves.take().is_some() {
            for n in &mut self.nodes {
                n.leaf_id = None;
            }
        }
        if let Some(sibling) = self.insert_at(self.root, p) {
            let old_root = self.root;
            let mbr = union_opt(self.nodes[old_root].mbr, self.nodes[sibling].mbr);
            self.root = self.push(Node {
                mbr,
                kind: NodeKind::Internal(vec![old_root, sibling]),
                leaf_id: None,
            });
        }
        self.len += 1;
        Ok(())
    }

    fn push(&mut self, node: Node) -> NodeId {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    /// Inserts below `node`; returns the new sibling when `node` was split.
    fn insert_at(&mut self, node: NodeId, p: Point) -> Option<NodeId> {
        let pr = Rect::from_point(p);
        self.nodes[node].mbr = union_opt(self.nodes[node].mbr, Some(pr));
        let max = self.config.max_entries;
        match &mut self.nodes[node].kind {
            NodeKind::Leaf(points) => {
                points.push(p);
                if points.len() <= max {
                    return None;
                }
                let entries = std::mem::take(points);
                let rects: Vec<Rect> = entries.iter().map(|p| Rect::from_point(*p)).collect();
                let (a, b) = linear_split(&rects, self.config.min_entries);
                let keep: Vec<Point> = a.iter().map(|&i| entries[i]).collect();
                let moved: Vec<Point> = b.iter().map(|&i| entries[i]).collect();
                let keep_mbr = Rect::bounding(&keep);
                let moved_mbr = Rect::bounding(&moved);
                self.nodes[node].kind = NodeKind::Leaf(keep);
                self.nodes[node].mbr = keep_mbr;
                Some(self.push(Node {
                    mbr: moved_mbr,
                    kind: NodeKind::Leaf(moved),
                    leaf_id: None,
                }))
            }
            NodeKind::Internal(children) => {
                let children = children.clone();
                let child = self.choose_subtree(&children, &pr);
                let split = self.insert_at(child, p)?;
                let NodeKind::Internal(children) = &mut self.nodes[node].kind else {
                    unreachable!()
                };
                children.push(split);
                if children.len() <= max {
                    return None;
                }
                let entries = std::mem::take(children);
                let rects: Vec<Rect> = entries.iter().map(|&c| self.mbr_of(c)).collect();
                let (a, b) = linear_split(&rects, self.config.min_entries);
                let keep: Vec<NodeId> = a.iter().map(|&i| entries[i]).collect();
                let moved: Vec<NodeId> = b.iter().map(|&i| entries[i]).collect();
                let keep_mbr = self.children_mbr(&keep);
                let moved_mbr = self.children_mbr(&moved);
                self.nodes[node].kind = NodeKind::Internal(keep);
                self.nodes[node].mbr = keep_mbr;
                Some(self.push(Node {
                    mbr: moved_mbr,
                    kind: NodeKind::Internal(moved),
                    leaf_id: None,
                }))
            }
        }
    }

    fn mbr_of(&self, node: NodeId) -> Rect {
        self.nodes[node]
            .mbr
            .expect("non-root nodes are never empty")
    }

    fn children_mbr(&self, children: &[NodeId]) -> Option<Rect> {
        children
            .iter()
            .map(|&c| self.mbr_of(c))
            .reduce(|a, b| a.union(&b))
    }

    /// Child needing least enlargement; ties go to the smaller area, then the first.
    fn choose_subtree(&self, children: &[NodeId], r: &Rect) -> NodeId {
        let mut best = children[0];
        let mut best_key = (f64::INFINITY, f64::INFINITY);
        for &c in children {
            let mbr = self.mbr_of(c);
            let key = (mbr.enlargement(r), mbr.area());
            if key.0 < best_key.0 || (key.0 == best_key.0 && key.1 < best_key.1) {
                best = c;
                best_key = key;
            }
        }
        best
    }

    /// Numbers leaves `0..leaf_count` in depth-first order, children in stored order.
    pub fn assign_leaf_ids(&mut self) -> Result<usize> {
        if self.is_empty() {
            return Err(Error::EmptyTree);
        }
        let mut order = Vec::new();
        let mut stack = vec![self.root];
        while let Some(n) = stack.pop() {
            match &self.nodes[n].kind {
                NodeKind::Leaf(_) => order.push(n),
                NodeKind::Internal(c) => stack.extend(c.iter().rev()),
            }
        }
        for (id, &n) in order.iter().enumerate() {
            self.nodes[n].leaf_id = Some(id as LeafId);
        }
        let count = order.len();
        self.leaves = Some(order);
        Ok(count)
    }

    fn leaf_table(&self) -> Result<&[NodeId]> {
        self.leaves.as_deref().ok_or(Error::LeafIdsUnassigned)
    }

    pub fn leaf_count(&self) -> Result<usize> {
        Ok(self.leaf_table()?.len())
    }

    pub fn leaf_entries(&self, id: LeafId) -> Result<&[Point]> {
        let node = self.leaf_node(id)?;
        match &self.nodes[node].kind {
            NodeKind::Leaf(p) => Ok(p),
            NodeKind::Internal(_) => unreachable!("leaf table points at an internal node"),
        }
    }

    pub fn leaf_mbr(&self, id: LeafId) -> Result<Rect> {
        Ok(self.mbr_of(self.leaf_node(id)?))
    }

    fn leaf_node(&self, id: LeafId) -> Result<NodeId> {
        let table = self.leaf_table()?;
        table.get(id as usize).copied().ok_or(Error::UnknownLeaf {
            id,
            leaf_count: table.len(),
        })
    }

    /// Standard descent recording visited and result-bearing leaves.
    pub fn range_query(&self, q: &Rect) -> Result<QueryTrace> {
        q.validate()?;
        self.leaf_table()?;
        let mut trace = QueryTrace::default();
        let mut stack = vec![self.root];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            match node.mbr {
                Some(m) if m.intersects(q) => {}
                _ => continue,
            }
            match &node.kind {
                NodeKind::Internal(c) => stack.extend(c.iter().rev()),
                NodeKind::Leaf(points) => {
                    let id = node.leaf_id.expect("ids assigned");
                    trace.visited_leaves.push(id);
                    let before = trace.results.len();
                    trace
                        .results
                        .extend(points.iter().filter(|p| q.contains_point(p)));
                    if trace.results.len() > before {
                        trace.true_leaves.push(id);
                    }
                }
            }
        }
        trace.leaf_accesses = trace.visited_leaves.len();
        Ok(trace)
    }

    /// Number of stored points inside `q`, without instrumentation.
    pub fn count_in(&self, q: &Rect) -> usize {
        let mut count = 0;
        let mut stack = vec![self.root];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            let Some(m) = node.mbr else { continue };
            if !m.intersects(q) {
                continue;
            }
            match &node.kind {
                NodeKind::Internal(c) => stack.extend(c.iter()),
                NodeKind::Leaf(points) => {
                    if q.contains_rect(&m) {
                        count += points.len();
                    } else {
                        count += points.iter().filter(|p| q.contains_point(p)).count();
                    }
                }
            }
        }
        count
    }

    /// Scans one leaf; always costs exactly one leaf access.
    pub fn scan_leaf(&self, id: LeafId, q: &Rect) -> Result<(Vec<Point>, usize)> {
        let points = self.leaf_entries(id)?;
        Ok((
            points
                .iter()
                .filter(|p| q.contains_point(p))
                .copied()
                .collect(),
            1,
        ))
    }

    /// Every stored point, in depth-first leaf order.
    pub fn points(&self) -> Vec<Point> {
        let mut out = Vec::with_capacity(self.len);
        let mut stack = vec![self.root];
        while let Some(n) = stack.pop() {
            match &self.nodes[n].kind {
                NodeKind::Leaf(p) => out.extend_from_slice(p),
                NodeKind::Internal(c) => stack.extend(c.iter().rev()),
            }
        }
        out
    }

    /// Estimated footprint: for every node, [`NODE_HEADER_BYTES`] plus
    /// [`POINT_ENTRY_BYTES`] per leaf entry or [`CHILD_ENTRY_BYTES`] per child.
    pub fn tree_size_bytes(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| {
                NODE_HEADER_BYTES
                    + match &n.kind {
                        NodeKind::Leaf(p) => p.len() * POINT_ENTRY_BYTES,
                        NodeKind::Internal(c) => c.len() * CHILD_ENTRY_BYTES,
                    }
            })
            .sum()
    }

    /// Full structural check: occupancy bounds, MBR tightness, uniform depth,
    /// and leaf id density when ids are assigned.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let RTreeConfig {
            max_entries: max,
            min_entries: min,
        } = self.config;
        let mut leaf_depth = None;
        let mut seen_points = 0;
        let mut ids = Vec::new();
        let mut stack = vec![(self.root, 0usize)];
        while let Some((n, depth)) = stack.pop() {
            let node = &self.nodes[n];
            let count = node.entry_count();
            let is_root = n == self.root;
            if count > max {
                return Err(format!("node {n} has {count} > M entries"));
            }
            if !is_root && count < min {
                return Err(format!("node {n} has {count} < m entries"));
            }
            let tight = match &node.kind {
                NodeKind::Leaf(p) => {
                    seen_points += p.len();
                    match leaf_depth {
                        None => leaf_depth = Some(depth),
                        Some(d) if d != depth => {
                            return Err(format!("leaf {n} at depth {depth}, expected {d}"))
                        }
                        _ => {}
                    }
                    if let Some(id) = node.leaf_id {
                        ids.push(id);
                    }
                    Rect::bounding(p)
                }
                NodeKind::Internal(c) => {
                    if is_root && c.len() < 2 {
                        return Err("internal root with fewer than 2 children".into());
                    }
                    stack.extend(c.iter().map(|&c| (c, depth + 1)));
                    self.children_mbr(c)
                }
            };
            if tight != node.mbr {
                return Err(format!(
                    "node {n} mbr {:?} is not tight ({tight:?})",
                    node.mbr
                ));
            }
        }
        if seen_points != self.len {
            return Err(format!(
                "walk found {seen_points} points, tree reports {}",
                self.len
            ));
        }
        if let Some(table) = &self.leaves {
            ids.sort_unstable();
            if ids.len() != table.len() || ids.iter().enumerate().any(|(i, &id)| id as usize != i) {
                return Err("leaf ids are not exactly 0..leaf_count".into());
            }
        }
        Ok(())
    }
}

fn union_opt(a: Option<Rect>, b: Option<Rect>) -> Option<Rect> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.union(&b)),
        (a, None) => a,
        (None, b) => b,
    }
}

/// Guttman's linear split over entry rectangles. Returns index groups, each
/// holding at least `min` entries.
pub(crate) fn linear_split(rects: &[Rect], min: usize) -> (Vec<usize>, Vec<usize>) {
    let n = rects.len();
    debug_assert!(n >= 2 && 2 * min <= n);
    let (seed_a, seed_b) = pick_seeds(rects);

    let mut groups = [vec![seed_a], vec![seed_b]];
    let mut mbrs = [rects[seed_a], rects[seed_b]];
    let mut remaining = n - 2;
    for (i, r) in rects.iter().enumerate() {
        if i == seed_a || i == seed_b {
            continue;
        }
        let g = if groups[0].len() + remaining == min {
            0
        } else if groups[1].len() + remaining == min {
            1
        } else {
            let key = |g: usize| (mbrs[g].enlargement(r), mbrs[g].area(), groups[g].len());
            let (ka, kb) = (key(0), key(1));
            let b_wins =
                kb.0 < ka.0 || (kb.0 == ka.0 && (kb.1 < ka.1 || (kb.1 == ka.1 && kb.2 < ka.2)));
            usize::from(b_wins)
        };
        groups[g].push(i);
        mbrs[g] = mbrs[g].union(r);
        remaining -= 1;
    }
    let [a, b] = groups;
    (a, b)
}

/// Per dimension: entry with the highest low side and (distinct) entry with
/// the lowest high side; keep the pair with the largest separation normalized
/// by the extent of the whole set along that dimension.
fn pick_seeds(rects: &[Rect]) -> (usize, usize) {
    let mut best = (0, 1);
    let mut best_sep = f64::NEG_INFINITY;
    for dim in 0..2 {
        let mut highest_low = 0;
        let mut lo_min = f64::INFINITY;
        let mut hi_max = f64::NEG_INFINITY;
        for (i, r) in rects.iter().enumerate() {
            let (lo, hi) = r.side(dim);
            if lo > rects[highest_low].side(dim).0 {
                highest_low = i;
            }
            lo_min = lo_min.min(lo);
            hi_max = hi_max.max(hi);
        }
        let mut lowest_high = usize::MAX;
        for (i, r) in rects.iter().enumerate() {
            if i == highest_low {
                continue;
            }
            if lowest_high == usize::MAX || r.side(dim).1 < rects[lowest_high].side(dim).1 {
                lowest_high = i;
            }
        }
        let width = hi_max - lo_min;
        let sep = rects[highest_low].side(dim).0 - rects[lowest_high].side(dim).1;
        let normalized = if width > 0.0 { sep / width } else { 0.0 };
        if normalized > best_sep {
            best_sep = normalized;
            best = (lowest_high, highest_low);
        }
    }
    best
}
