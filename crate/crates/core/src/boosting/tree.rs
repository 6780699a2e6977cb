//! Exact greedy regression trees on presorted columns.
//!
//! A node with residual sum `G` over `n` rows has leaf value `G / (n + lambda)`
//! and the split gain is
//! `G_L^2/(n_L + lambda) + G_R^2/(n_R + lambda) - G^2/(n + lambda)`,
//! which is the reduction in `sum (r - v)^2 + lambda * v^2`.
//!
//! Residuals are quantized once per tree to a fixed-point grid whose scale
//! depends only on their largest magnitude, and all residual sums are exact
//! integer sums, so the grown tree does not depend on the order of the
//! training rows.

use serde::{Deserialize, Serialize};

use super::Design;
use crate::par;

/// Nodes smaller than this scan features sequentially.
const PARALLEL_MIN_ROWS: usize = 512;

/// Relative gain below which a split is treated as no improvement.
pub const GAIN_EPSILON: f64 = 1e-12;

/// Flat node: internal nodes route `x[feature] <= threshold` to `left`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub feature: Option<usize>,
    pub threshold: f64,
    pub left: Option<usize>,
    pub right: Option<usize>,
    /// Leaf output (also kept on internal nodes for inspection).
    pub value: f64,
}

impl Node {
    fn leaf(value: f64) -> Self {
        Self {
            feature: None,
            threshold: 0.0,
            left: None,
            right: None,
            value,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature.is_none()
    }
}

/// A regression tree stored as a node array with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            match (n.feature, n.left, n.right) {
                (Some(f), Some(l), Some(r)) => i = if row[f] <= n.threshold { l } else { r },
                _ => return n.value,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match (t.nodes[i].left, t.nodes[i].right) {
                (Some(l), Some(r)) => 1 + walk(t, l).max(walk(t, r)),
                _ => 0,
            }
        }
        walk(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn uses_feature(&self, feature: usize) -> bool {
        self.nodes.iter().any(|n| n.feature == Some(feature))
    }

    /// Root split as `(feature, threshold)`, if the root is internal.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        self.nodes[0].feature.map(|f| (f, self.nodes[0].threshold))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub l2_leaf_penalty: f64,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    row: u32,
    value: f64,
}

/// Rows sorted by each feature's value (ties keep row order), stored with
/// the values so that split scans read memory sequentially.
pub struct ColumnOrder {
    columns: Vec<Vec<Entry>>,
}

impl ColumnOrder {
    pub fn new(design: &Design<'_>) -> Self {
        let columns = par::map_range(design.n_features, |f| {
            let mut col: Vec<Entry> = (0..design.n_rows)
                .map(|r| Entry {
                    row: r as u32,
                    value: design.value(r, f),
                })
                .collect();
            col.sort_by(|a, b| a.value.total_cmp(&b.value));
            col
        });
        Self { columns }
    }

    /// Per-feature orders restricted to rows with `mask[row]` set, each
    /// paired with a scratch buffer for partitioning.
    fn restrict(&self, features: &[usize], mask: Option<&[bool]>) -> Vec<Column> {
        par::map_slice(features, |&f| {
            let entries: Vec<Entry> = match mask {
                None => self.columns[f].clone(),
                Some(m) => self.columns[f].iter().copied().filter(|e| m[e.row as usize]).collect(),
            };
            let scratch = Vec::with_capacity(entries.len());
            Column { entries, scratch }
        })
    }
}

struct Column {
    entries: Vec<Entry>,
    scratch: Vec<Entry>,
}

impl Column {
    /// Stable in-place partition of `entries[lo..hi]` by `left[row]`.
    fn partition(&mut self, lo: usize, hi: usize, left: &[bool]) {
        self.scratch.clear();
        let mut w = lo;
        for i in lo..hi {
            let e = self.entries[i];
            if left[e.row as usize] {
                self.entries[w] = e;
                w += 1;
            } else {
                self.scratch.push(e);
            }
        }
        self.entries[w..hi].copy_from_slice(&self.scratch);
    }
}

/// Order-independent sum: values are sorted before adding.
fn canonical_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    threshold: f64,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) * 0.5;
    if m >= b || m < a {
        a
    } else {
        m
    }
}

/// Exact residual sums on a power-of-two fixed-point grid.
struct Fixed {
    values: Vec<i64>,
    scale: f64,
}

impl Fixed {
    fn new(residuals: &[f64]) -> Self {
        let max = residuals.iter().fold(0.0_f64, |a, r| a.max(r.abs()));
        let n = residuals.len().max(1) as f64;
        // Any partial sum stays below 2^62 in magnitude.
        let exp = if max > 0.0 {
            (62 - (max * n).log2().ceil() as i32).clamp(-1000, 1000)
        } else {
            0
        };
        let scale = 2f64.powi(exp);
        let values = residuals.iter().map(|r| (r * scale).round() as i64).collect();
        Self { values, scale }
    }

    fn to_f64(&self, v: i64) -> f64 {
        v as f64 / self.scale
    }
}

struct Grower<'a> {
    residuals: &'a [f64],
    fixed: Fixed,
    features: &'a [usize],
    params: TreeParams,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn scan(&self, order: &[Entry], g_total: i64) -> Option<Candidate> {
        let n = order.len();
        let lambda = self.params.l2_leaf_penalty;
        let min_leaf = self.params.min_samples_leaf.max(1);
        let gt = self.fixed.to_f64(g_total);
        let parent = gt * gt / (n as f64 + lambda);
        let mut best: Option<Candidate> = None;
        let mut gl: i64 = 0;
        let lo = min_leaf.min(n);
        let hi = n.saturating_sub(min_leaf);
        for i in 0..n {
            let e = order[i];
            gl += self.fixed.values[e.row as usize];
            let nl = i + 1;
            if nl < lo || nl > hi || nl == n {
                continue;
            }
            let next = order[nl].value;
            if next == e.value {
                continue;
            }
            let gl_f = self.fixed.to_f64(gl);
            let gr_f = self.fixed.to_f64(g_total - gl);
            let nr = n - nl;
            let gain = gl_f * gl_f / (nl as f64 + lambda) + gr_f * gr_f / (nr as f64 + lambda) - parent;
            if best.is_none_or(|b| gain > b.gain) {
                best = Some(Candidate {
                    gain,
                    threshold: midpoint(e.value, next),
                });
            }
        }
        best
    }

    fn grow(&mut self, cols: &mut [Column], lo: usize, hi: usize, depth: usize, go_left: &mut [bool]) -> usize {
        let n = hi - lo;
        let node_rows = &cols[0].entries[lo..hi];
        let g_total: i64 = node_rows.iter().map(|e| self.fixed.values[e.row as usize]).sum();
        let mut sq: Vec<f64> = node_rows
            .iter()
            .map(|e| self.residuals[e.row as usize].powi(2))
            .collect();
        let ss = canonical_sum(&mut sq);
        let value = self.fixed.to_f64(g_total) / (n as f64 + self.params.l2_leaf_penalty);
        let id = self.nodes.len();
        self.nodes.push(Node::leaf(value));

        let min_leaf = self.params.min_samples_leaf.max(1);
        if depth >= self.params.max_depth || n < 2 * min_leaf {
            return id;
        }
        let candidates: Vec<Option<Candidate>> = if n >= PARALLEL_MIN_ROWS {
            par::map_slice(cols, |c| self.scan(&c.entries[lo..hi], g_total))
        } else {
            cols.iter().map(|c| self.scan(&c.entries[lo..hi], g_total)).collect()
        };
        // Lowest feature index wins ties; features are scanned in ascending order.
        let mut best: Option<(usize, Candidate)> = None;
        let mut by_feature: Vec<(usize, Option<Candidate>)> =
            (0..self.features.len()).map(|k| (k, candidates[k])).collect();
        by_feature.sort_by_key(|(k, _)| self.features[*k]);
        for (k, c) in by_feature {
            if let Some(c) = c {
                if best.is_none_or(|(_, b)| c.gain > b.gain) {
                    best = Some((k, c));
                }
            }
        }
        let Some((k, split)) = best else { return id };
        if !(split.gain > GAIN_EPSILON * ss + f64::MIN_POSITIVE) {
            return id;
        }
        let feature = self.features[k];
        let mut n_left = 0;
        for e in &cols[k].entries[lo..hi] {
            let l = e.value <= split.threshold;
            go_left[e.row as usize] = l;
            n_left += l as usize;
        }
        let mask: &[bool] = go_left;
        if n >= PARALLEL_MIN_ROWS {
            par::for_each_mut(cols, |c| c.partition(lo, hi, mask));
        } else {
            cols.iter_mut().for_each(|c| c.partition(lo, hi, mask));
        }
        let mid = lo + n_left;
        let l = self.grow(cols, lo, mid, depth + 1, go_left);
        let r = self.grow(cols, mid, hi, depth + 1, go_left);
        let node = &mut self.nodes[id];
        node.feature = Some(feature);
        node.threshold = split.threshold;
        node.left = Some(l);
        node.right = Some(r);
        id
    }
}

/// Fits one tree to `residuals` over the selected rows and features.
///
/// `mask` selects the training rows (all rows when `None`). `features` must be
/// non-empty.
pub fn fit_tree_presorted(
    design: &Design<'_>,
    order: &ColumnOrder,
    residuals: &[f64],
    mask: Option<&[bool]>,
    features: &[usize],
    params: &TreeParams,
) -> Tree {
    assert!(!features.is_empty(), "fit_tree needs at least one feature");
    let mut cols = order.restrict(features, mask);
    let n = cols[0].entries.len();
    if n == 0 {
        return Tree {
            nodes: vec![Node::leaf(0.0)],
        };
    }
    let mut grower = Grower {
        residuals,
        fixed: Fixed::new(residuals),
        features,
        params: *params,
        nodes: Vec::new(),
    };
    let mut go_left = vec![false; design.n_rows];
    grower.grow(&mut cols, 0, n, 0, &mut go_left);
    Tree { nodes: grower.nodes }
}

/// Fits one tree on all rows and all features of `design`.
pub fn fit_tree(design: &Design<'_>, residuals: &[f64], params: &TreeParams) -> Tree {
    let order = ColumnOrder::new(design);
    let features: Vec<usize> = (0..design.n_features).collect();
    fit_tree_presorted(design, &order, residuals, None, &features, params)
}
