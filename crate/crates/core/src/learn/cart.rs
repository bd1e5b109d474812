//! Greedy CART growth shared by the multi-label tree and the forest members.
//!
//! Targets are sparse label sets. The split criterion is the sum over labels
//! of per-label Gini impurity, weighted by child size. For a node of `n`
//! samples with per-label positive counts `c_l`,
//!
//! `n * sum_l 2 p_l (1 - p_l) = 2 (S1 - S2 / n)` with `S1 = sum c_l`, `S2 = sum c_l^2`,
//!
//! so minimizing the weighted child impurity is the same as maximizing
//! `S2_left / n_left + S2_right / n_right`. Both sums update in O(|labels|)
//! as one sample moves from the right child to the left during the sweep.
//! With a single label this is plain binary Gini.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

pub const N_FEATURES: usize = 4;
pub type Features = [f64; N_FEATURES];

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum RawNode {
    Split {
        feature: u8,
        threshold: f64,
        left: u32,
        right: u32,
    },
    /// `counts` holds `(label, positives)` for every label seen at the leaf.
    Leaf { n: u32, counts: Vec<(u32, u32)> },
}

pub(crate) struct GrowOptions<'r> {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features examined per split; fewer than [`N_FEATURES`] requires `rng`.
    pub features_per_split: usize,
    pub rng: Option<&'r mut ChaCha8Rng>,
}

struct Best {
    feature: usize,
    threshold: f64,
    score: f64,
}

struct Grower<'a> {
    x: &'a [Features],
    y: &'a [Vec<u32>],
    node_counts: Vec<u32>,
    left: Vec<u32>,
    right: Vec<u32>,
    touched: Vec<u32>,
    order: Vec<usize>,
}

impl Grower<'_> {
    /// Fills `node_counts`/`touched` for the samples; returns `(S1, S2)`.
    fn stats(&mut self, samples: &[usize]) -> (u64, u64) {
        for &l in &self.touched {
            self.node_counts[l as usize] = 0;
        }
        self.touched.clear();
        for &i in samples {
            for &l in &self.y[i] {
                if self.node_counts[l as usize] == 0 {
                    self.touched.push(l);
                }
                self.node_counts[l as usize] += 1;
            }
        }
        self.touched.sort_unstable();
        let mut s1 = 0u64;
        let mut s2 = 0u64;
        for &l in &self.touched {
            let c = self.node_counts[l as usize] as u64;
            s1 += c;
            s2 += c * c;
        }
        (s1, s2)
    }

    /// Best threshold on one feature, or `None` if the feature is constant.
    /// With `cap` set, only thresholds leaving both sides at most `cap`
    /// samples are considered.
    fn sweep(
        &mut self,
        samples: &[usize],
        feature: usize,
        s1: u64,
        s2: u64,
        cap: usize,
    ) -> Option<Best> {
        let x = self.x;
        self.order.clear();
        self.order.extend_from_slice(samples);
        self.order
            .sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]).then(a.cmp(&b)));
        for &l in &self.touched {
            self.left[l as usize] = 0;
            self.right[l as usize] = self.node_counts[l as usize];
        }
        let n = samples.len();
        let (mut s1l, mut s2l) = (0u64, 0u64);
        let (mut s1r, mut s2r) = (s1, s2);
        let mut best: Option<Best> = None;
        for k in 0..n - 1 {
            let i = self.order[k];
            for &l in &self.y[i] {
                let cl = self.left[l as usize] as u64;
                s2l += 2 * cl + 1;
                s1l += 1;
                self.left[l as usize] += 1;
                let cr = self.right[l as usize] as u64;
                s2r -= 2 * cr - 1;
                s1r -= 1;
                self.right[l as usize] -= 1;
            }
            let lo = x[i][feature];
            let hi = x[self.order[k + 1]][feature];
            if lo >= hi || k + 1 > cap || n - k - 1 > cap {
                continue;
            }
            let nl = (k + 1) as f64;
            let nr = (n - k - 1) as f64;
            let score = s2l as f64 / nl + s2r as f64 / nr;
            if best.as_ref().is_none_or(|b| score > b.score) {
                best = Some(Best {
                    feature,
                    threshold: midpoint(lo, hi),
                    score,
                });
            }
        }
        debug_assert_eq!(s1l + s1r, s1);
        best
    }
}

/// Threshold strictly separating `lo < hi` under `x <= threshold`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo / 2.0 + hi / 2.0;
    if mid >= lo && mid < hi {
        mid
    } else {
        lo
    }
}

/// Grows a tree over `samples` (indices into `x`/`y`, repeats allowed).
/// Node 0 is the root.
pub(crate) fn grow(
    x: &[Features],
    y: &[Vec<u32>],
    mut samples: Vec<usize>,
    label_count: usize,
    mut opts: GrowOptions<'_>,
) -> Vec<RawNode> {
    let mut g = Grower {
        x,
        y,
        node_counts: vec![0; label_count],
        left: vec![0; label_count],
        right: vec![0; label_count],
        touched: Vec::new(),
        order: Vec::with_capacity(samples.len()),
    };
    let mut nodes = vec![RawNode::Leaf {
        n: 0,
        counts: Vec::new(),
    }];
    // (node slot, sample range, depth)
    let mut stack = vec![(0usize, 0usize, samples.len(), 0usize)];
    let mut features: Vec<usize> = (0..N_FEATURES).collect();
    while let Some((slot, lo, hi, depth)) = stack.pop() {
        let node_samples = &samples[lo..hi];
        let n = node_samples.len();
        let (s1, s2) = g.stats(node_samples);
        let pure = n as u64 * s1 == s2;
        let depth_ok = opts.max_depth.is_none_or(|d| depth < d);
        let mut best: Option<Best> = None;
        if !pure && depth_ok && n >= opts.min_samples_split.max(2) {
            let candidates: Vec<usize> = if opts.features_per_split >= N_FEATURES {
                (0..N_FEATURES).collect()
            } else {
                let rng = opts
                    .rng
                    .as_deref_mut()
                    .expect("feature subsampling needs an rng");
                features.sort_unstable();
                features.shuffle(rng);
                features.clone()
            };
            let (drawn, rest) = candidates.split_at(opts.features_per_split.min(N_FEATURES));
            let mut drawn = drawn.to_vec();
            drawn.sort_unstable();
            // Near the depth limit, prefer splits whose children can still be
            // separated completely in the depth that remains.
            let caps = match opts.max_depth {
                Some(d) if d - depth - 1 < usize::BITS as usize - 1 && n > 1 << (d - depth - 1) => {
                    vec![1usize << (d - depth - 1), usize::MAX]
                }
                _ => vec![usize::MAX],
            };
            'search: for cap in caps {
                for group in [&drawn[..], rest] {
                    for &f in group {
                        if let Some(b) = g.sweep(node_samples, f, s1, s2, cap) {
                            if best.as_ref().is_none_or(|cur| b.score > cur.score) {
                                best = Some(b);
                            }
                        }
                    }
                    if best.is_some() {
                        break 'search;
                    }
                }
            }
        }
        match best {
            None => {
                let counts = g
                    .touched
                    .iter()
                    .map(|&l| (l, g.node_counts[l as usize]))
                    .collect();
                nodes[slot] = RawNode::Leaf {
                    n: n as u32,
                    counts,
                };
            }
            Some(b) => {
                let (mut l, mut r): (Vec<usize>, Vec<usize>) = node_samples
                    .iter()
                    .partition(|&&i| x[i][b.feature] <= b.threshold);
                let mid = lo + l.len();
                l.append(&mut r);
                samples[lo..hi].copy_from_slice(&l);
                let left = nodes.len();
                nodes.push(RawNode::Leaf {
                    n: 0,
                    counts: Vec::new(),
                });
                nodes.push(RawNode::Leaf {
                    n: 0,
                    counts: Vec::new(),
                });
                nodes[slot] = RawNode::Split {
                    feature: b.feature as u8,
                    threshold: b.threshold,
                    left: left as u32,
                    right: left as u32 + 1,
                };
                stack.push((left + 1, mid, hi, depth + 1));
                stack.push((left, lo, mid, depth + 1));
            }
        }
    }
    nodes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> GrowOptions<'static> {
        GrowOptions {
            max_depth: None,
            min_samples_split: 2,
            features_per_split: N_FEATURES,
            rng: None,
        }
    }

    /// Brute-force weighted multi-output Gini of a split, straight from the definition.
    fn weighted_gini(y: &[Vec<u32>], left: &[usize], right: &[usize], labels: usize) -> f64 {
        let side = |s: &[usize]| {
            let n = s.len() as f64;
            (0..labels as u32)
                .map(|l| {
                    let p = s.iter().filter(|&&i| y[i].contains(&l)).count() as f64 / n;
                    2.0 * p * (1.0 - p)
                })
                .sum::<f64>()
                * n
        };
        side(left) + side(right)
    }

    #[test]
    fn sweep_picks_the_brute_force_best_split() {
        let x: Vec<Features> = vec![
            [0.0, 5.0, 1.0, 2.0],
            [1.0, 4.0, 1.0, 2.0],
            [2.0, 3.0, 1.0, 2.0],
            [3.0, 2.0, 1.0, 2.0],
            [4.0, 1.0, 1.0, 2.0],
            [5.0, 0.0, 1.0, 2.0],
        ];
        let y: Vec<Vec<u32>> = vec![vec![0], vec![0, 1], vec![1], vec![1, 2], vec![2], vec![2]];
        let all: Vec<usize> = (0..6).collect();
        let mut best = (f64::INFINITY, 0usize, 0.0f64);
        for f in 0..N_FEATURES {
            let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = (w[0] + w[1]) / 2.0;
                let (l, r): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| x[i][f] <= t);
                let imp = weighted_gini(&y, &l, &r, 3);
                if imp < best.0 - 1e-12 {
                    best = (imp, f, t);
                }
            }
        }
        let nodes = grow(&x, &y, all, 3, opts());
        let RawNode::Split {
            feature, threshold, ..
        } = nodes[0]
        else {
            panic!("root should split");
        };
        assert_eq!((feature as usize, threshold), (best.1, best.2));
    }

    #[test]
    fn constant_features_make_a_leaf() {
        let x: Vec<Features> = vec![[1.0; 4], [1.0; 4]];
        let y = vec![vec![0], vec![1]];
        let nodes = grow(&x, &y, vec![0, 1], 2, opts());
        assert_eq!(nodes.len(), 1);
        assert_eq!(
            nodes[0],
            RawNode::Leaf {
                n: 2,
                counts: vec![(0, 1), (1, 1)]
            }
        );
    }

    #[test]
    fn midpoint_separates_adjacent_floats() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let t = midpoint(lo, hi);
        assert!(lo <= t && t < hi);
        assert_eq!(midpoint(1.0, 3.0), 2.0);
    }
}
