//! Multi-source, multi-target bidirectional Dijkstra with k-best extraction
//! by meeting vertex.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ptg::{CostKind, VirtualGraph, VirtualId};

/// A path through one virtual graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualRoute {
    pub nodes: Vec<VirtualId>,
    /// Topology edge indices, `nodes.len() - 1` of them.
    pub edges: Vec<u32>,
    /// Initial offset + edge weights + terminal offset.
    pub cost: f64,
    pub cost_kind: CostKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchStatus {
    Complete,
    Unreachable,
    /// The deadline passed; routes found so far are returned.
    TimeBudgetExceeded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub routes: Vec<VirtualRoute>,
    pub status: SearchStatus,
}

#[derive(Debug, Clone, Copy)]
pub struct SearchParams {
    pub max_routes: usize,
    /// Keep expanding until the frontiers' lower bound reaches
    /// `cost_ratio` times the best meeting cost; 1.0 yields just the
    /// exact optimum plus ties discovered on the way.
    pub cost_ratio: f64,
    pub deadline: Option<Instant>,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self { max_routes: 1, cost_ratio: 1.0, deadline: None }
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Queued {
    cost: f64,
    node: VirtualId,
}

impl Eq for Queued {}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NONE: u32 = u32::MAX;

struct Side {
    dist: Vec<f64>,
    pred: Vec<u32>,
    settled: Vec<bool>,
    heap: BinaryHeap<Queued>,
}

impl Side {
    fn new(n: usize, seeds: &[(VirtualId, f64)]) -> Self {
        let mut s = Self { dist: vec![f64::INFINITY; n], pred: vec![NONE; n], settled: vec![false; n], heap: BinaryHeap::new() };
        for &(v, c) in seeds {
            if c < s.dist[v as usize] {
                s.dist[v as usize] = c;
                s.heap.push(Queued { cost: c, node: v });
            }
        }
        s
    }

    /// Smallest unsettled key, discarding stale heap entries.
    fn top(&mut self) -> f64 {
        while let Some(q) = self.heap.peek() {
            if self.settled[q.node as usize] || q.cost > self.dist[q.node as usize] {
                self.heap.pop();
            } else {
                return q.cost;
            }
        }
        f64::INFINITY
    }
}

/// Searches `g` from `sources` to `targets`, each a (node, offset) pair.
///
/// The first route is an exact shortest path. Further routes are one per
/// meeting vertex (forward tree path + reverse tree path), deduplicated by
/// node sequence, in nondecreasing cost order; paths whose two halves share
/// a node are dropped.
pub fn bidirectional_dijkstra(
    g: &VirtualGraph,
    sources: &[(VirtualId, f64)],
    targets: &[(VirtualId, f64)],
    params: &SearchParams,
) -> SearchOutcome {
    let topo = &g.topology;
    let n = topo.nodes.len();
    let mut fwd = Side::new(n, sources);
    let mut rev = Side::new(n, targets);
    let mut best = f64::INFINITY;
    for &(v, _) in targets {
        best = best.min(fwd.dist[v as usize] + rev.dist[v as usize]);
    }
    let ratio = params.cost_ratio.max(1.0);
    let mut status = SearchStatus::Complete;
    let mut pops = 0u32;

    loop {
        let (tf, tr) = (fwd.top(), rev.top());
        if tf.is_infinite() && tr.is_infinite() {
            break;
        }
        if best.is_finite() && tf + tr >= best * ratio {
            break;
        }
        pops += 1;
        if pops.is_multiple_of(256) && params.deadline.is_some_and(|d| Instant::now() >= d) {
            status = SearchStatus::TimeBudgetExceeded;
            break;
        }
        let forward = tf <= tr;
        let (this, other) = if forward { (&mut fwd, &rev) } else { (&mut rev, &fwd) };
        let Queued { cost, node } = this.heap.pop().expect("top was finite");
        this.settled[node as usize] = true;
        let mut relax = |e: usize, next: VirtualId| {
            let c = cost + g.weights[e];
            if c < this.dist[next as usize] {
                this.dist[next as usize] = c;
                this.pred[next as usize] = e as u32;
                this.heap.push(Queued { cost: c, node: next });
            }
            let meet = this.dist[next as usize] + other.dist[next as usize];
            if meet < best {
                best = meet;
            }
        };
        if forward {
            for e in topo.out_edges(node) {
                relax(e, topo.edges[e].to);
            }
        } else {
            for &e in topo.in_edges(node) {
                relax(e as usize, topo.edges[e as usize].from);
            }
        }
    }

    if best.is_infinite() {
        let status = if status == SearchStatus::Complete { SearchStatus::Unreachable } else { status };
        return SearchOutcome { routes: Vec::new(), status };
    }

    let mut meets: Vec<(f64, VirtualId)> = (0..n)
        .filter(|&v| fwd.dist[v].is_finite() && rev.dist[v].is_finite())
        .map(|v| (fwd.dist[v] + rev.dist[v], v as VirtualId))
        .collect();
    meets.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut seen: HashSet<Vec<VirtualId>> = HashSet::new();
    let mut routes = Vec::new();
    for (cost, x) in meets {
        if routes.len() >= params.max_routes.max(1) || cost > best * ratio {
            break;
        }
        let Some((nodes, edges)) = stitch(g, &fwd.pred, &rev.pred, x) else {
            continue;
        };
        if seen.insert(nodes.clone()) {
            routes.push(VirtualRoute { nodes, edges, cost, cost_kind: g.cost_kind });
        }
    }
    SearchOutcome { routes, status }
}

/// Forward tree path to `x` followed by the reverse tree path from `x`.
/// `None` if the two halves revisit a node.
fn stitch(g: &VirtualGraph, fpred: &[u32], rpred: &[u32], x: VirtualId) -> Option<(Vec<VirtualId>, Vec<u32>)> {
    let topo = &g.topology;
    let mut nodes = vec![x];
    let mut edges = Vec::new();
    let mut v = x;
    while fpred[v as usize] != NONE {
        let e = fpred[v as usize];
        edges.push(e);
        v = topo.edges[e as usize].from;
        nodes.push(v);
    }
    nodes.reverse();
    edges.reverse();
    let mut v = x;
    while rpred[v as usize] != NONE {
        let e = rpred[v as usize];
        edges.push(e);
        v = topo.edges[e as usize].to;
        nodes.push(v);
    }
    let mut uniq = HashSet::with_capacity(nodes.len());
    nodes.iter().all(|v| uniq.insert(*v)).then_some((nodes, edges))
}
