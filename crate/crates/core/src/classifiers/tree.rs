//! Binary threshold trees shared by every tree-based model.
//!
//! Training keeps, for every feature, the node's sample ids sorted by that
//! feature. A node owns the same contiguous segment in every list; a split
//! stably partitions each segment, so sorting happens once per fit.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Split feature, or `u32::MAX` for a leaf.
    pub feature: u32,
    pub threshold: f64,
    /// Left child, or the leaf's value offset.
    pub left: u32,
    pub right: u32,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

/// A fitted tree. Each leaf stores `value_width` numbers: a class
/// distribution for classification trees, a single value for regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub values: Vec<f64>,
    pub value_width: usize,
}

impl Tree {
    /// Leaf values reached by `row` (`x <= threshold` goes left).
    #[inline]
    pub fn leaf(&self, row: &[f64]) -> &[f64] {
        let mut node = &self.nodes[0];
        while !node.is_leaf() {
            let next = if row[node.feature as usize] <= node.threshold {
                node.left
            } else {
                node.right
            };
            node = &self.nodes[next as usize];
        }
        let off = node.left as usize;
        &self.values[off..off + self.value_width]
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + walk(t, n.left as usize).max(walk(t, n.right as usize))
            }
        }
        walk(self, 0)
    }
}

/// Column-major copy of a feature matrix.
pub(crate) struct Columns {
    n: usize,
    data: Vec<f64>,
    d: usize,
}

impl Columns {
    pub fn new(x: ArrayView2<f64>) -> Self {
        let (n, d) = x.dim();
        let mut data = Vec::with_capacity(n * d);
        for j in 0..d {
            data.extend(x.column(j).iter());
        }
        Self { n, data, d }
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.d
    }

    /// Row ids sorted by each feature (value, then id).
    pub fn presort(&self) -> Vec<Vec<u32>> {
        (0..self.d)
            .map(|j| {
                let col = self.col(j);
                let mut idx: Vec<u32> = (0..self.n as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect()
    }
}

/// Keeps only rows with `keep[row]`, preserving sort order.
pub(crate) fn restrict(sorted: &[Vec<u32>], keep: &[bool]) -> Vec<Vec<u32>> {
    sorted
        .iter()
        .map(|s| s.iter().copied().filter(|&i| keep[i as usize]).collect())
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Non-constant features examined per node.
    pub max_features: usize,
    /// Draw one uniform threshold per feature instead of scanning all cut points.
    pub random_thresholds: bool,
}

/// Split statistics over the samples of one node.
pub(crate) trait Accumulator {
    /// Totals over `samples`; clears the left side.
    fn set_node(&mut self, samples: &[u32]);
    fn reset_left(&mut self);
    fn push_left(&mut self, i: u32);
    /// Higher is better; only called with weight on both sides.
    fn proxy(&self) -> f64;
    fn left_weight(&self) -> f64;
    fn total_weight(&self) -> f64;
    fn node_is_pure(&self) -> bool;
    fn leaf_value(&self, samples: &[u32], out: &mut Vec<f64>);
    fn value_width(&self) -> usize;
}

/// Weighted Gini impurity over encoded class labels.
pub(crate) struct Gini<'a> {
    labels: &'a [usize],
    weights: &'a [f64],
    total: Vec<f64>,
    total_w: f64,
    total_sq: f64,
    left: Vec<f64>,
    left_w: f64,
    left_sq: f64,
    cross: f64,
}

impl<'a> Gini<'a> {
    pub fn new(labels: &'a [usize], weights: &'a [f64], n_classes: usize) -> Self {
        Self {
            labels,
            weights,
            total: vec![0.0; n_classes],
            total_w: 0.0,
            total_sq: 0.0,
            left: vec![0.0; n_classes],
            left_w: 0.0,
            left_sq: 0.0,
            cross: 0.0,
        }
    }
}

impl Accumulator for Gini<'_> {
    fn set_node(&mut self, samples: &[u32]) {
        self.total.iter_mut().for_each(|v| *v = 0.0);
        self.total_w = 0.0;
        for &i in samples {
            let w = self.weights[i as usize];
            self.total[self.labels[i as usize]] += w;
            self.total_w += w;
        }
        self.total_sq = self.total.iter().map(|c| c * c).sum();
        self.reset_left();
    }

    fn reset_left(&mut self) {
        self.left.iter_mut().for_each(|v| *v = 0.0);
        self.left_w = 0.0;
        self.left_sq = 0.0;
        self.cross = 0.0;
    }

    #[inline]
    fn push_left(&mut self, i: u32) {
        let k = self.labels[i as usize];
        let w = self.weights[i as usize];
        self.left_sq += (2.0 * self.left[k] + w) * w;
        self.cross += self.total[k] * w;
        self.left[k] += w;
        self.left_w += w;
    }

    #[inline]
    fn proxy(&self) -> f64 {
        let right_w = self.total_w - self.left_w;
        let right_sq = self.total_sq - 2.0 * self.cross + self.left_sq;
        self.left_sq / self.left_w + right_sq / right_w
    }

    fn left_weight(&self) -> f64 {
        self.left_w
    }

    fn total_weight(&self) -> f64 {
        self.total_w
    }

    fn node_is_pure(&self) -> bool {
        self.total.iter().filter(|&&c| c > 0.0).count() <= 1
    }

    fn leaf_value(&self, _samples: &[u32], out: &mut Vec<f64>) {
        if self.total_w > 0.0 {
            out.extend(self.total.iter().map(|c| c / self.total_w));
        } else {
            let k = self.total.len() as f64;
            out.extend(self.total.iter().map(|_| 1.0 / k));
        }
    }

    fn value_width(&self) -> usize {
        self.total.len()
    }
}

/// Weighted squared error over real targets. Leaf values come from `leaf`.
pub(crate) struct SquaredError<'a, F> {
    targets: &'a [f64],
    weights: &'a [f64],
    leaf: F,
    total_w: f64,
    total_wy: f64,
    total_wyy: f64,
    left_w: f64,
    left_wy: f64,
}

impl<'a, F: Fn(&[u32]) -> f64> SquaredError<'a, F> {
    pub fn new(targets: &'a [f64], weights: &'a [f64], leaf: F) -> Self {
        Self {
            targets,
            weights,
            leaf,
            total_w: 0.0,
            total_wy: 0.0,
            total_wyy: 0.0,
            left_w: 0.0,
            left_wy: 0.0,
        }
    }
}

impl<F: Fn(&[u32]) -> f64> Accumulator for SquaredError<'_, F> {
    fn set_node(&mut self, samples: &[u32]) {
        let (mut w, mut wy, mut wyy) = (0.0, 0.0, 0.0);
        for &i in samples {
            let (wi, yi) = (self.weights[i as usize], self.targets[i as usize]);
            w += wi;
            wy += wi * yi;
            wyy += wi * yi * yi;
        }
        self.total_w = w;
        self.total_wy = wy;
        self.total_wyy = wyy;
        self.reset_left();
    }

    fn reset_left(&mut self) {
        self.left_w = 0.0;
        self.left_wy = 0.0;
    }

    #[inline]
    fn push_left(&mut self, i: u32) {
        let w = self.weights[i as usize];
        self.left_w += w;
        self.left_wy += w * self.targets[i as usize];
    }

    #[inline]
    fn proxy(&self) -> f64 {
        let rw = self.total_w - self.left_w;
        let rwy = self.total_wy - self.left_wy;
        self.left_wy * self.left_wy / self.left_w + rwy * rwy / rw
    }

    fn left_weight(&self) -> f64 {
        self.left_w
    }

    fn total_weight(&self) -> f64 {
        self.total_w
    }

    fn node_is_pure(&self) -> bool {
        if self.total_w <= 0.0 {
            return true;
        }
        let sse = self.total_wyy - self.total_wy * self.total_wy / self.total_w;
        sse <= 1e-12 * (1.0 + self.total_wyy)
    }

    fn leaf_value(&self, samples: &[u32], out: &mut Vec<f64>) {
        out.push((self.leaf)(samples));
    }

    fn value_width(&self) -> usize {
        1
    }
}

struct Candidate {
    proxy: f64,
    feature: usize,
    threshold: f64,
}

/// Grows one tree over the samples present in `sorted`.
pub(crate) fn grow<A: Accumulator>(
    cols: &Columns,
    mut sorted: Vec<Vec<u32>>,
    acc: &mut A,
    params: &GrowParams,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let d = cols.n_features();
    let n_samples = sorted.first().map_or(0, Vec::len);
    let mut tree = Tree {
        nodes: Vec::new(),
        values: Vec::new(),
        value_width: acc.value_width(),
    };
    let mut goes_left = vec![false; cols.n_rows()];
    let mut scratch: Vec<u32> = Vec::with_capacity(n_samples);
    let mut features: Vec<usize> = (0..d).collect();
    let min_leaf = params.min_samples_leaf.max(1);

    tree.nodes.push(placeholder());
    // (node id, segment start, segment end, depth)
    let mut stack = vec![(0usize, 0usize, n_samples, 0usize)];
    while let Some((id, lo, hi, depth)) = stack.pop() {
        let samples = &sorted[0][lo..hi];
        acc.set_node(samples);
        let n = hi - lo;
        let can_split = n >= 2 * min_leaf
            && params.max_depth.is_none_or(|m| depth < m)
            && !acc.node_is_pure()
            && acc.total_weight() > 0.0;

        let best = if can_split {
            find_split(
                cols,
                &sorted,
                lo,
                hi,
                acc,
                params,
                min_leaf,
                &mut features,
                rng,
            )
        } else {
            None
        };

        let Some(best) = best else {
            let offset = tree.values.len();
            acc.leaf_value(&sorted[0][lo..hi], &mut tree.values);
            tree.nodes[id] = Node {
                feature: LEAF,
                threshold: 0.0,
                left: offset as u32,
                right: 0,
            };
            continue;
        };

        let col = cols.col(best.feature);
        for &i in &sorted[0][lo..hi] {
            goes_left[i as usize] = col[i as usize] <= best.threshold;
        }
        let mut n_left = 0;
        for list in sorted.iter_mut() {
            let seg = &mut list[lo..hi];
            scratch.clear();
            let mut w = 0;
            for k in 0..seg.len() {
                let i = seg[k];
                if goes_left[i as usize] {
                    seg[w] = i;
                    w += 1;
                } else {
                    scratch.push(i);
                }
            }
            seg[w..].copy_from_slice(&scratch);
            n_left = w;
        }
        let left = tree.nodes.len();
        tree.nodes.push(placeholder());
        let right = tree.nodes.len();
        tree.nodes.push(placeholder());
        tree.nodes[id] = Node {
            feature: best.feature as u32,
            threshold: best.threshold,
            left: left as u32,
            right: right as u32,
        };
        stack.push((right, lo + n_left, hi, depth + 1));
        stack.push((left, lo, lo + n_left, depth + 1));
    }
    tree
}

fn placeholder() -> Node {
    Node {
        feature: LEAF,
        threshold: 0.0,
        left: 0,
        right: 0,
    }
}

#[allow(clippy::too_many_arguments)]
fn find_split<A: Accumulator>(
    cols: &Columns,
    sorted: &[Vec<u32>],
    lo: usize,
    hi: usize,
    acc: &mut A,
    params: &GrowParams,
    min_leaf: usize,
    features: &mut [usize],
    rng: &mut ChaCha8Rng,
) -> Option<Candidate> {
    let d = features.len();
    if params.max_features < d {
        features.shuffle(rng);
    } else {
        features.iter_mut().enumerate().for_each(|(i, f)| *f = i);
    }
    let mut best: Option<Candidate> = None;
    let mut visited = 0;
    for &f in features.iter() {
        if visited >= params.max_features {
            break;
        }
        let seg = &sorted[f][lo..hi];
        let col = cols.col(f);
        let (first, last) = (col[seg[0] as usize], col[seg[seg.len() - 1] as usize]);
        if first >= last {
            continue;
        }
        visited += 1;
        let found = if params.random_thresholds {
            random_cut(seg, col, first, last, acc, min_leaf, rng)
        } else {
            best_cut(seg, col, acc, min_leaf)
        };
        if let Some((proxy, threshold)) = found {
            if best.as_ref().is_none_or(|b| proxy > b.proxy) {
                best = Some(Candidate {
                    proxy,
                    feature: f,
                    threshold,
                });
            }
        }
    }
    best
}

fn best_cut<A: Accumulator>(
    seg: &[u32],
    col: &[f64],
    acc: &mut A,
    min_leaf: usize,
) -> Option<(f64, f64)> {
    acc.reset_left();
    let n = seg.len();
    let mut best: Option<(f64, f64)> = None;
    for p in 0..n - 1 {
        acc.push_left(seg[p]);
        let n_left = p + 1;
        if n_left < min_leaf {
            continue;
        }
        if n - n_left < min_leaf {
            break;
        }
        let (a, b) = (col[seg[p] as usize], col[seg[p + 1] as usize]);
        if a >= b || acc.left_weight() <= 0.0 || acc.total_weight() - acc.left_weight() <= 0.0 {
            continue;
        }
        let proxy = acc.proxy();
        if best.is_none_or(|(bp, _)| proxy > bp) {
            let mid = 0.5 * (a + b);
            let threshold = if mid < b { mid } else { a };
            best = Some((proxy, threshold));
        }
    }
    best
}

fn random_cut<A: Accumulator>(
    seg: &[u32],
    col: &[f64],
    first: f64,
    last: f64,
    acc: &mut A,
    min_leaf: usize,
    rng: &mut ChaCha8Rng,
) -> Option<(f64, f64)> {
    let mut threshold = rng.random_range(first..last);
    if threshold >= last {
        threshold = first;
    }
    acc.reset_left();
    let mut n_left = 0;
    for &i in seg {
        if col[i as usize] > threshold {
            break;
        }
        acc.push_left(i);
        n_left += 1;
    }
    if n_left < min_leaf || seg.len() - n_left < min_leaf {
        return None;
    }
    if acc.left_weight() <= 0.0 || acc.total_weight() - acc.left_weight() <= 0.0 {
        return None;
    }
    Some((acc.proxy(), threshold))
}
