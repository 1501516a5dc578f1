//! Slow, obviously-correct reference pieces used to check the search:
//! a textbook single-direction Dijkstra and a random virtual graph
//! generator with integer weights (so path sums are exact in `f64`).

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ptg::{CostKind, EdgeKind, VirtualEdge, VirtualGraph, VirtualId, VirtualStation, VirtualTopology};

/// Cheapest `offset(s) + path(s, t) + offset(t)`, by O(n²) Dijkstra from
/// the whole source set.
pub fn dijkstra_cost(g: &VirtualGraph, sources: &[(VirtualId, f64)], targets: &[(VirtualId, f64)]) -> Option<f64> {
    let topo = &g.topology;
    let n = topo.nodes.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    for &(s, c) in sources {
        dist[s as usize] = dist[s as usize].min(c);
    }
    while let Some(u) = (0..n).filter(|&i| !done[i] && dist[i].is_finite()).min_by(|&a, &b| dist[a].total_cmp(&dist[b])) {
        done[u] = true;
        for e in topo.out_edges(u as VirtualId) {
            let v = topo.edges[e].to as usize;
            if dist[u] + g.weights[e] < dist[v] {
                dist[v] = dist[u] + g.weights[e];
            }
        }
    }
    targets.iter().map(|&(t, c)| dist[t as usize] + c).filter(|c| c.is_finite()).min_by(f64::total_cmp)
}

/// A random directed graph over `n` nodes (each its own station and line)
/// with integer weights in `0..=max_weight`.
pub fn random_graph(seed: u64, n: usize, avg_degree: f64, max_weight: u32) -> VirtualGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes: Vec<VirtualStation> = (0..n as u32).map(|i| VirtualStation { physical: i, line: i }).collect();
    let mut pairs = Vec::new();
    let p = (avg_degree / n.max(2) as f64).min(1.0);
    for a in 0..n as u32 {
        for b in 0..n as u32 {
            if a != b && rng.gen_bool(p) {
                pairs.push((a, b, rng.gen_range(0..=max_weight) as f64));
            }
        }
    }
    let edges = pairs
        .iter()
        .map(|&(from, to, _)| VirtualEdge { from, to, kind: EdgeKind::Ride, physical_edge: None, walk_m: 0.0 })
        .collect();
    let topology = VirtualTopology::from_parts(nodes, edges, n);
    // from_parts sorts by (from, to); pairs were generated in that order.
    let weights = pairs.iter().map(|p| p.2).collect();
    VirtualGraph { cost_kind: CostKind::Distance, topology: Arc::new(topology), weights }
}

pub type Endpoints = Vec<(VirtualId, f64)>;

/// Random source and target sets with integer offsets.
pub fn random_endpoints(seed: u64, n: usize) -> (Endpoints, Endpoints) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut pick = |k: usize| -> Vec<(VirtualId, f64)> {
        (0..k).map(|_| (rng.gen_range(0..n as u32), rng.gen_range(0..20) as f64)).collect()
    };
    let ks = 1 + (seed as usize % 3);
    let s = pick(ks);
    let t = pick(1 + (seed as usize / 3 % 3));
    (s, t)
}
