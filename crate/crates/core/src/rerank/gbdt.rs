//! Pairwise gradient-boosted regression trees.
//!
//! Scores follow the averaging recurrence
//! `f_k = (k·f_{k-1} − β·g_k) / (k+1)`, `f_0 = 0`, where each tree `g_k` is
//! fit to the gradient of the squared pairwise hinge, so `−β·g_k` descends.

use serde::{Deserialize, Serialize};

use super::RerankError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtParams {
    /// Pairwise margin, in (0, 1].
    pub tau: f64,
    /// Weight of the constant `−λ1·τ²` objective term (reporting only).
    pub lambda1: f64,
    /// L2 shrinkage on leaf values.
    pub lambda2: f64,
    pub beta: f64,
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Histogram bins per feature, at most 256.
    pub max_bins: usize,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self { tau: 1.0, lambda1: 0.0, lambda2: 1.0, beta: 0.1, n_trees: 200, max_depth: 6, min_leaf: 10, max_bins: 64 }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<(), RerankError> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(RerankError::InvalidTau(self.tau));
        }
        let bad = |m: &str| Err(RerankError::InvalidParams(m.to_string()));
        if self.n_trees == 0 {
            return bad("n_trees must be at least 1");
        }
        if self.min_leaf == 0 {
            return bad("min_leaf must be at least 1");
        }
        if !(2..=256).contains(&self.max_bins) {
            return bad("max_bins must be in 2..=256");
        }
        if !(self.beta.is_finite() && self.lambda2 >= 0.0 && self.lambda1.is_finite()) {
            return bad("beta, lambda1 and lambda2 must be finite, lambda2 non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root first.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self { nodes: vec![Node::Leaf { value }] }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature as usize] <= threshold { left } else { right } as usize;
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub dim: usize,
    pub beta: f64,
    pub trees: Vec<Tree>,
    /// Cumulative split gain per feature.
    pub gains: Vec<f64>,
}

impl Ensemble {
    pub fn empty(dim: usize, beta: f64) -> Self {
        Self { dim, beta, trees: Vec::new(), gains: vec![0.0; dim] }
    }

    /// `f_K(x)`.
    pub fn score(&self, x: &[f64]) -> f64 {
        self.trees.iter().enumerate().fold(0.0, |f, (i, t)| step(f, i + 1, self.beta, t.eval(x)))
    }

    /// `[f_0(x), f_1(x), …, f_K(x)]`.
    pub fn score_path(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0];
        for (i, t) in self.trees.iter().enumerate() {
            out.push(step(out[i], i + 1, self.beta, t.eval(x)));
        }
        out
    }

    /// Per-feature gain normalized so the largest is 1, in descending
    /// order (ties keep schema order). Empty for an untrained model.
    pub fn importance(&self) -> Vec<(usize, f64)> {
        if self.trees.is_empty() {
            return Vec::new();
        }
        let top = self.gains.iter().copied().fold(0.0, f64::max);
        let mut out: Vec<(usize, f64)> =
            self.gains.iter().enumerate().map(|(i, g)| (i, if top > 0.0 { g / top } else { 0.0 })).collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }
}

/// One step of the score recurrence for round `k ≥ 1`.
pub fn step(prev: f64, k: usize, beta: f64, g: f64) -> f64 {
    let k = k as f64;
    (k * prev - beta * g) / (k + 1.0)
}

/// Squared hinge `½·max(0, τ − (f1 − f2))²` for a pair where `f1` is preferred.
pub fn pair_loss(f1: f64, f2: f64, tau: f64) -> Result<f64, RerankError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(RerankError::InvalidTau(tau));
    }
    let m = (tau - (f1 - f2)).max(0.0);
    Ok(0.5 * m * m)
}

/// `(∂L/∂f1, ∂L/∂f2)` of [`pair_loss`].
pub fn pair_gradient(f1: f64, f2: f64, tau: f64) -> (f64, f64) {
    let m = (tau - (f1 - f2)).max(0.0);
    (-m, m)
}

/// Quantized feature columns.
#[derive(Debug, Clone)]
pub struct Bins {
    /// Sorted cut points per feature; bin `b` holds `cuts[b-1] < x <= cuts[b]`.
    pub cuts: Vec<Vec<f64>>,
    /// Bin codes, feature-major.
    codes: Vec<Vec<u8>>,
}

impl Bins {
    pub fn build(rows: &[&[f64]], dim: usize, max_bins: usize) -> Self {
        let mut cuts = Vec::with_capacity(dim);
        let mut codes = Vec::with_capacity(dim);
        for f in 0..dim {
            let mut vals: Vec<f64> = rows.iter().map(|r| r[f]).collect();
            vals.sort_by(f64::total_cmp);
            let mut uniq = vals.clone();
            uniq.dedup();
            let c: Vec<f64> = if uniq.len() <= max_bins {
                uniq.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            } else {
                let mut c: Vec<f64> = (1..max_bins)
                    .map(|j| {
                        let i = (j * vals.len() / max_bins).max(1);
                        0.5 * (vals[i - 1] + vals[i])
                    })
                    .filter(|&c| c < uniq[uniq.len() - 1])
                    .collect();
                c.dedup();
                c
            };
            codes.push(rows.iter().map(|r| c.partition_point(|&t| t < r[f]) as u8).collect());
            cuts.push(c);
        }
        Self { cuts, codes }
    }
}

struct Hist {
    sum: Vec<f64>,
    count: Vec<u32>,
}

struct Builder<'a> {
    bins: &'a Bins,
    offsets: Vec<usize>,
    target: &'a [f64],
    p: &'a GbdtParams,
    nodes: Vec<Node>,
    gains: Vec<f64>,
    out: Vec<f64>,
}

impl Builder<'_> {
    fn hist(&self, idx: &[u32]) -> Hist {
        let n = *self.offsets.last().unwrap_or(&0);
        let mut h = Hist { sum: vec![0.0; n], count: vec![0; n] };
        for (f, codes) in self.bins.codes.iter().enumerate() {
            if self.bins.cuts[f].is_empty() {
                continue;
            }
            let off = self.offsets[f];
            for &i in idx {
                let b = off + codes[i as usize] as usize;
                h.sum[b] += self.target[i as usize];
                h.count[b] += 1;
            }
        }
        h
    }

    fn score(&self, s: f64, n: u32) -> f64 {
        s * s / (n as f64 + self.p.lambda2)
    }

    fn build(&mut self, idx: &mut [u32], hist: Hist, depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf { value: 0.0 });
        let s: f64 = idx.iter().map(|&i| self.target[i as usize]).sum();
        let n = idx.len() as u32;
        let min_leaf = self.p.min_leaf as u32;

        let mut best: Option<(usize, usize, f64)> = None;
        if depth < self.p.max_depth && n >= 2 * min_leaf {
            let parent = self.score(s, n);
            for f in 0..self.bins.cuts.len() {
                let nb = self.bins.cuts[f].len();
                let off = self.offsets[f];
                let (mut sl, mut nl) = (0.0, 0u32);
                for b in 0..nb {
                    sl += hist.sum[off + b];
                    nl += hist.count[off + b];
                    let nr = n - nl;
                    if nl < min_leaf {
                        continue;
                    }
                    if nr < min_leaf {
                        break;
                    }
                    let gain = self.score(sl, nl) + self.score(s - sl, nr) - parent;
                    if gain > 1e-12 && best.is_none_or(|(_, _, g)| gain > g) {
                        best = Some((f, b, gain));
                    }
                }
            }
        }

        let Some((f, b, gain)) = best else {
            let value = s / (n as f64 + self.p.lambda2);
            for &i in idx.iter() {
                self.out[i as usize] = value;
            }
            self.nodes[id as usize] = Node::Leaf { value };
            return id;
        };
        self.gains[f] += gain;
        let codes = &self.bins.codes[f];
        let (mut left, mut right): (Vec<u32>, Vec<u32>) = idx.iter().partition(|&&i| codes[i as usize] as usize <= b);
        let nl = left.len();
        idx[..nl].copy_from_slice(&left);
        idx[nl..].copy_from_slice(&right);
        // Histogram the smaller child, derive the larger by subtraction.
        let (small, large_is_left) = if left.len() <= right.len() { (&left, false) } else { (&right, true) };
        let hs = self.hist(small);
        let hl = Hist {
            sum: hist.sum.iter().zip(&hs.sum).map(|(a, b)| a - b).collect(),
            count: hist.count.iter().zip(&hs.count).map(|(a, b)| a - b).collect(),
        };
        let (hist_left, hist_right) = if large_is_left { (hl, hs) } else { (hs, hl) };
        let l = self.build(&mut left, hist_left, depth + 1);
        let r = self.build(&mut right, hist_right, depth + 1);
        self.nodes[id as usize] = Node::Split { feature: f as u32, threshold: self.bins.cuts[f][b], left: l, right: r };
        id
    }
}

/// A least-squares tree on `target`. Returns the tree, the gain it adds per
/// feature and its value on every row.
pub fn fit_tree(bins: &Bins, target: &[f64], p: &GbdtParams) -> (Tree, Vec<f64>, Vec<f64>) {
    let mut offsets = vec![0];
    for c in &bins.cuts {
        offsets.push(offsets.last().unwrap() + if c.is_empty() { 0 } else { c.len() + 1 });
    }
    let mut b =
        Builder { bins, offsets, target, p, nodes: Vec::new(), gains: vec![0.0; bins.cuts.len()], out: vec![0.0; target.len()] };
    let mut idx: Vec<u32> = (0..target.len() as u32).collect();
    let h = b.hist(&idx);
    b.build(&mut idx, h, 0);
    (Tree { nodes: b.nodes }, b.gains, b.out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundInfo {
    pub round: usize,
    /// Summed pair loss after this round.
    pub loss: f64,
    /// Pairs with a non-zero hinge after this round.
    pub active_pairs: usize,
    pub leaves: usize,
}

/// Fits `params.n_trees` rounds on `rows` for pairs `(preferred, other)`.
pub fn train(
    rows: &[Vec<f64>],
    pairs: &[(usize, usize)],
    params: &GbdtParams,
    mut observer: impl FnMut(&RoundInfo),
) -> Result<Ensemble, RerankError> {
    params.validate()?;
    if pairs.is_empty() {
        return Err(RerankError::NoPairs);
    }
    let dim = rows.first().map_or(0, |r| r.len());
    // Only rows that appear in a pair carry gradient.
    let mut local = vec![usize::MAX; rows.len()];
    let mut used: Vec<&[f64]> = Vec::new();
    let mut lp = Vec::with_capacity(pairs.len());
    for &(a, b) in pairs {
        let mut map = |i: usize| {
            if local[i] == usize::MAX {
                local[i] = used.len();
                used.push(&rows[i]);
            }
            local[i]
        };
        lp.push((map(a), map(b)));
    }
    if used.iter().any(|r| r.len() != dim) {
        return Err(RerankError::SchemaMismatch {
            expected: dim,
            found: used.iter().map(|r| r.len()).find(|&l| l != dim).unwrap_or(0),
        });
    }
    let bins = Bins::build(&used, dim, params.max_bins);
    let mut ens = Ensemble::empty(dim, params.beta);
    let mut f = vec![0.0; used.len()];
    let mut grad = vec![0.0; used.len()];
    for k in 1..=params.n_trees {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for &(a, b) in &lp {
            let (ga, gb) = pair_gradient(f[a], f[b], params.tau);
            grad[a] += ga;
            grad[b] += gb;
        }
        let (tree, gains, out) = fit_tree(&bins, &grad, params);
        for (fi, gi) in f.iter_mut().zip(&out) {
            *fi = step(*fi, k, params.beta, *gi);
        }
        for (acc, g) in ens.gains.iter_mut().zip(gains) {
            *acc += g;
        }
        let mut loss = 0.0;
        let mut active = 0;
        for &(a, b) in &lp {
            let l = pair_loss(f[a], f[b], params.tau)?;
            loss += l;
            active += (l > 0.0) as usize;
        }
        observer(&RoundInfo { round: k, loss, active_pairs: active, leaves: tree.n_leaves() });
        ens.trees.push(tree);
    }
    Ok(ens)
}
