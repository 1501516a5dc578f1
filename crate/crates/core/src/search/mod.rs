//! Route candidate generation: search each virtual graph, translate the
//! virtual paths into line segments, add parallel-edge variants, filter.

mod dijkstra;
pub mod reference;

use std::collections::HashMap;
use std::hash::Hasher;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binder::BoundStation;
use crate::model::{RouteSummary, TransportMode};
use crate::ptg::{CityGraph, CostKind, EdgeKind, LineIdx, StationIdx, VirtualId, WeightConfig};

pub use dijkstra::{bidirectional_dijkstra, SearchOutcome, SearchParams, SearchStatus, VirtualRoute};

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("virtual node {node} maps to station {station}, which line {line} does not serve in that order")]
    InconsistentMapping { node: VirtualId, station: StationIdx, line: LineIdx },
    #[error("no origin or destination station")]
    NoEndpoints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchLimits {
    /// Stop once this many candidates are collected.
    pub max_candidates: usize,
    /// Wall-clock budget for the whole generation; `None` disables it.
    pub max_time_ms: Option<u64>,
    pub max_transfers: u32,
    /// Per-graph k-best horizon as a multiple of the optimal cost.
    pub cost_ratio: f64,
    /// Virtual routes requested per graph; defaults to 4 × `max_candidates`.
    pub routes_per_graph: Option<usize>,
}

impl Default for SearchLimits {
    fn default() -> Self {
        Self { max_candidates: 50, max_time_ms: Some(50), max_transfers: 4, cost_ratio: 2.0, routes_per_graph: None }
    }
}

impl SearchLimits {
    pub fn unbounded_time(mut self) -> Self {
        self.max_time_ms = None;
        self
    }
}

/// One ride on one line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteSegment {
    pub line: LineIdx,
    pub line_id: String,
    pub line_name: String,
    pub mode: TransportMode,
    pub board: StationIdx,
    pub alight: StationIdx,
    /// Every stop from `board` to `alight` inclusive, in riding order.
    pub stops: Vec<StationIdx>,
    pub distance_m: f64,
    pub duration_s: f64,
    pub fare: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Graphs whose search produced this route directly.
    pub cost_kinds: Vec<CostKind>,
    /// Produced by swapping a segment onto a parallel edge.
    pub augmented: bool,
}

/// A feasible transit route with walking legs and totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteCandidate {
    pub segments: Vec<RouteSegment>,
    pub start_walk_m: f64,
    pub end_walk_m: f64,
    /// Walk before each segment after the first.
    pub transfer_walks_m: Vec<f64>,
    pub transfer_walk_m: f64,
    pub on_transport_m: f64,
    /// On-transport plus every walk.
    pub distance_m: f64,
    /// Door-to-door estimate: walks, expected waits, rides, transfer penalties.
    pub duration_s: f64,
    pub wait_s: f64,
    pub fare: f64,
    pub n_transfers: u32,
    /// Distance-weighted congestion over on-road segments; off-road rides count as 0.
    pub congestion: f64,
    pub provenance: Provenance,
    pub signature: u64,
}

impl RouteCandidate {
    pub fn modes(&self) -> Vec<TransportMode> {
        self.segments.iter().map(|s| s.mode).collect()
    }

    pub fn walk_m(&self) -> f64 {
        self.start_walk_m + self.end_walk_m + self.transfer_walk_m
    }

    /// Every physical station visited, transfer stations once.
    pub fn stations(&self) -> Vec<StationIdx> {
        let mut out: Vec<StationIdx> = Vec::new();
        for s in &self.segments {
            for &p in &s.stops {
                if out.last() != Some(&p) {
                    out.push(p);
                }
            }
        }
        out
    }

    pub fn has_cycle(&self) -> bool {
        let mut st = self.stations();
        let n = st.len();
        st.sort_unstable();
        st.dedup();
        st.len() != n
    }

    /// Features the ranker and the query log need, evaluated for a
    /// departure at `depart_ts` (UTC seconds).
    pub fn summary(&self, city: &CityGraph, config: &WeightConfig, depart_ts: i64) -> RouteSummary {
        let minute = |t: f64| ((depart_ts as f64 + t).rem_euclid(86_400.0) / 60.0) as u32;
        let mut t = self.start_walk_m / config.walk_speed_mps;
        let mut in_service = true;
        for (i, seg) in self.segments.iter().enumerate() {
            let line = &city.lines[seg.line as usize];
            if i > 0 {
                t += config.transfer_penalty_s + self.transfer_walks_m[i - 1] / config.walk_speed_mps;
            }
            t += line.expected_wait_s();
            in_service &= line.in_service(minute(t));
            t += seg.duration_s;
        }
        let ticket_available = self.segments.iter().all(|s| city.lines[s.line as usize].in_service(minute(0.0)));
        RouteSummary {
            eta_s: self.duration_s,
            wait_s: self.wait_s,
            fare: self.fare,
            ticket_available,
            in_service,
            distance_m: self.distance_m,
            congestion: self.congestion,
            start_walk_m: self.start_walk_m,
            end_walk_m: self.end_walk_m,
            transfer_walk_m: self.transfer_walk_m,
            on_transport_m: self.on_transport_m,
            n_transfers: self.n_transfers,
            modes: self.modes(),
            signature: self.signature,
        }
    }
}

/// Canonical hash of the (line, board, alight) sequence.
pub fn route_signature(city: &CityGraph, segments: &[RouteSegment]) -> u64 {
    let mut h = fnv::FnvHasher::default();
    for s in segments {
        h.write(city.lines[s.line as usize].id.as_bytes());
        h.write_u8(0);
        h.write(city.physical.stations[s.board as usize].id.as_bytes());
        h.write_u8(0);
        h.write(city.physical.stations[s.alight as usize].id.as_bytes());
        h.write_u8(1);
    }
    h.finish()
}

fn ride(city: &CityGraph, line: LineIdx, board_pos: usize, alight_pos: usize) -> RouteSegment {
    let l = &city.lines[line as usize];
    let distance_m = l.cumulative_m[alight_pos] - l.cumulative_m[board_pos];
    RouteSegment {
        line,
        line_id: l.id.clone(),
        line_name: l.name.clone(),
        mode: l.mode,
        board: l.stops[board_pos],
        alight: l.stops[alight_pos],
        stops: l.stops[board_pos..=alight_pos].to_vec(),
        distance_m,
        duration_s: distance_m / l.speed_mps,
        fare: l.fare,
    }
}

fn node_of(city: &CityGraph, station: StationIdx, line: LineIdx) -> Option<VirtualId> {
    let topo = city.topology();
    topo.at_station(station).iter().copied().find(|&v| topo.nodes[v as usize].line == line)
}

/// Walk between alighting `a` and boarding `b`: the transfer edge's walk if
/// one exists, otherwise the configured in-station walk or the straight line.
fn transfer_walk(city: &CityGraph, config: &WeightConfig, a: &RouteSegment, b: &RouteSegment) -> f64 {
    let topo = city.topology();
    if let (Some(x), Some(y)) = (node_of(city, a.alight, a.line), node_of(city, b.board, b.line)) {
        if let Some(e) = topo.find_edge(x, y) {
            return topo.edges[e].walk_m;
        }
    }
    let (sa, sb) = (&city.physical.stations[a.alight as usize], &city.physical.stations[b.board as usize]);
    if a.alight == b.board {
        config.station_transfer_walk_m.get(&sa.id).copied().unwrap_or(config.transfer_walk_m)
    } else {
        sa.location.haversine_m(&sb.location)
    }
}

/// Fills totals and the signature for a segment list. Adjacent rides on the
/// same line are merged first.
pub fn assemble(
    city: &CityGraph,
    config: &WeightConfig,
    segments: Vec<RouteSegment>,
    start_walk_m: f64,
    end_walk_m: f64,
    provenance: Provenance,
) -> RouteCandidate {
    let mut merged: Vec<RouteSegment> = Vec::with_capacity(segments.len());
    for s in segments {
        match merged.last_mut() {
            Some(prev) if prev.line == s.line && prev.alight == s.board => {
                let l = &city.lines[s.line as usize];
                let (b, a) = (l.position(prev.board).unwrap(), l.position(s.alight).unwrap());
                *prev = ride(city, s.line, b, a);
            }
            _ => merged.push(s),
        }
    }
    let ws = config.walk_speed_mps;
    let transfer_walks_m: Vec<f64> = merged.windows(2).map(|w| transfer_walk(city, config, &w[0], &w[1])).collect();
    let transfer_walk_m: f64 = transfer_walks_m.iter().sum();
    let on_transport_m: f64 = merged.iter().map(|s| s.distance_m).sum();
    let ride_s: f64 = merged.iter().map(|s| s.duration_s).sum();
    let wait_s: f64 = merged.iter().map(|s| city.lines[s.line as usize].expected_wait_s()).sum();
    let n_transfers = merged.len().saturating_sub(1) as u32;
    let congestion = if on_transport_m > 0.0 {
        merged.iter().filter(|s| s.mode.on_road()).map(|s| s.distance_m * city.lines[s.line as usize].congestion).sum::<f64>()
            / on_transport_m
    } else {
        0.0
    };
    let walk = start_walk_m + end_walk_m + transfer_walk_m;
    RouteCandidate {
        signature: route_signature(city, &merged),
        start_walk_m,
        end_walk_m,
        transfer_walk_m,
        on_transport_m,
        distance_m: on_transport_m + walk,
        duration_s: walk / ws + wait_s + ride_s + n_transfers as f64 * config.transfer_penalty_s,
        wait_s,
        fare: merged.iter().map(|s| s.fare).sum(),
        n_transfers,
        congestion,
        provenance,
        transfer_walks_m,
        segments: merged,
    }
}

/// Collapses maximal same-line runs of `route` into ride segments. Runs of a
/// single node (a transfer straight through a line) carry no ride and are
/// skipped. Walks outside the first and last ride are folded into the
/// start and end walks. Returns `None` for a route without any ride.
pub fn translate(
    city: &CityGraph,
    config: &WeightConfig,
    route: &VirtualRoute,
    origin_walk: &HashMap<StationIdx, f64>,
    dest_walk: &HashMap<StationIdx, f64>,
) -> Result<Option<RouteCandidate>, SearchError> {
    let topo = city.topology();
    let mut segments = Vec::new();
    let mut i = 0;
    let n = route.nodes.len();
    let mut first_ride_node = None;
    let mut last_ride_node = 0;
    while i < n {
        let line = topo.nodes[route.nodes[i] as usize].line;
        let mut j = i;
        while j + 1 < n
            && topo.nodes[route.nodes[j + 1] as usize].line == line
            && topo.edges[route.edges[j] as usize].kind == EdgeKind::Ride
        {
            j += 1;
        }
        if j > i {
            let l = &city.lines[line as usize];
            let pos = |k: usize| {
                let v = route.nodes[k];
                let station = topo.station_of(v);
                l.position(station).ok_or(SearchError::InconsistentMapping { node: v, station, line })
            };
            let (b, a) = (pos(i)?, pos(j)?);
            if b >= a {
                let v = route.nodes[j];
                return Err(SearchError::InconsistentMapping { node: v, station: topo.station_of(v), line });
            }
            segments.push(ride(city, line, b, a));
            first_ride_node.get_or_insert(i);
            last_ride_node = j;
        }
        i = j + 1;
    }
    let Some(first) = first_ride_node else {
        return Ok(None);
    };
    // Walks on transfer edges that connect different stations before the
    // first ride or after the last one.
    let station_walk = |range: std::ops::Range<usize>| -> f64 {
        range
            .map(|k| &topo.edges[route.edges[k] as usize])
            .filter(|e| e.kind == EdgeKind::Transfer && topo.station_of(e.from) != topo.station_of(e.to))
            .map(|e| e.walk_m)
            .sum()
    };
    let start = topo.station_of(route.nodes[0]);
    let end = topo.station_of(route.nodes[n - 1]);
    let start_walk = origin_walk.get(&start).copied().unwrap_or(0.0) + station_walk(0..first);
    let end_walk = dest_walk.get(&end).copied().unwrap_or(0.0) + station_walk(last_ride_node..n - 1);
    let provenance = Provenance { cost_kinds: vec![route.cost_kind], augmented: false };
    Ok(Some(assemble(city, config, segments, start_walk, end_walk, provenance)))
}

/// One variant per parallel physical edge of each segment (same board and
/// alight stations, different line), replacing only that segment.
pub fn augment(city: &CityGraph, config: &WeightConfig, route: &RouteCandidate) -> Vec<RouteCandidate> {
    let mut out = Vec::new();
    for (i, seg) in route.segments.iter().enumerate() {
        for pe in city.physical.parallel_edges(seg.board, seg.alight) {
            if pe.line == seg.line {
                continue;
            }
            let l = &city.lines[pe.line as usize];
            let (Some(b), Some(a)) = (l.position(pe.origin), l.position(pe.dest)) else {
                continue;
            };
            let mut segments = route.segments.clone();
            segments[i] = ride(city, pe.line, b, a);
            let provenance = Provenance { cost_kinds: Vec::new(), augmented: true };
            out.push(assemble(city, config, segments, route.start_walk_m, route.end_walk_m, provenance));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CandidateStatus {
    Ok,
    /// No transit route connects the bound stations.
    Unreachable,
    /// Origin and destination bind to the same stations; walking is the answer.
    WalkOnly,
    /// Budget ran out; the candidates found so far are returned.
    TimeBudgetExceeded,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub virtual_routes: usize,
    pub augmented: usize,
    pub duplicates: usize,
    pub cycles: usize,
    pub too_many_transfers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub candidates: Vec<RouteCandidate>,
    pub status: CandidateStatus,
    pub stats: GenerationStats,
}

fn offsets(
    city: &CityGraph,
    config: &WeightConfig,
    bound: &[BoundStation],
    kind: CostKind,
    boarding: bool,
) -> Vec<(VirtualId, f64)> {
    let topo = city.topology();
    let mut out = Vec::new();
    for b in bound {
        for &v in topo.at_station(b.station) {
            let walk = b.total_distance_m;
            let cost = match kind {
                CostKind::Distance | CostKind::WalkDistance => walk,
                CostKind::TravelTime => {
                    let wait = if boarding { city.lines[topo.nodes[v as usize].line as usize].expected_wait_s() } else { 0.0 };
                    walk / config.walk_speed_mps + wait
                }
            };
            out.push((v, cost));
        }
    }
    out
}

/// Searches all three virtual graphs between the bound stations and
/// returns up to `limits.max_candidates` distinct, cycle-free routes.
pub fn generate_candidates(
    city: &CityGraph,
    config: &WeightConfig,
    origins: &[BoundStation],
    dests: &[BoundStation],
    limits: &SearchLimits,
) -> Result<CandidateSet, SearchError> {
    if origins.is_empty() || dests.is_empty() {
        return Err(SearchError::NoEndpoints);
    }
    let started = Instant::now();
    let deadline = limits.max_time_ms.map(|ms| started + Duration::from_millis(ms));
    let mut stats = GenerationStats::default();

    let mut o: Vec<StationIdx> = origins.iter().map(|b| b.station).collect();
    let mut d: Vec<StationIdx> = dests.iter().map(|b| b.station).collect();
    o.sort_unstable();
    d.sort_unstable();
    if o == d {
        return Ok(CandidateSet { candidates: Vec::new(), status: CandidateStatus::WalkOnly, stats });
    }
    let origin_walk: HashMap<StationIdx, f64> = origins.iter().map(|b| (b.station, b.total_distance_m)).collect();
    let dest_walk: HashMap<StationIdx, f64> = dests.iter().map(|b| (b.station, b.total_distance_m)).collect();

    let params = SearchParams {
        max_routes: limits.routes_per_graph.unwrap_or(4 * limits.max_candidates),
        cost_ratio: limits.cost_ratio,
        deadline,
    };
    let outcomes: Vec<SearchOutcome> = CostKind::ALL
        .iter()
        .map(|&kind| {
            let g = city.virtual_graph(kind);
            let s = offsets(city, config, origins, kind, true);
            let t = offsets(city, config, dests, kind, false);
            if s.is_empty() || t.is_empty() {
                return SearchOutcome { routes: Vec::new(), status: SearchStatus::Unreachable };
            }
            bidirectional_dijkstra(g, &s, &t, &params)
        })
        .collect();
    let mut timed_out = outcomes.iter().any(|o| o.status == SearchStatus::TimeBudgetExceeded);

    let mut candidates: Vec<RouteCandidate> = Vec::new();
    let mut by_signature: HashMap<u64, usize> = HashMap::new();
    let mut admit = |c: RouteCandidate, stats: &mut GenerationStats, candidates: &mut Vec<RouteCandidate>| {
        if let Some(&i) = by_signature.get(&c.signature) {
            stats.duplicates += 1;
            for k in c.provenance.cost_kinds {
                if !candidates[i].provenance.cost_kinds.contains(&k) {
                    candidates[i].provenance.cost_kinds.push(k);
                }
            }
        } else if c.has_cycle() {
            stats.cycles += 1;
        } else if c.n_transfers > limits.max_transfers {
            stats.too_many_transfers += 1;
        } else {
            by_signature.insert(c.signature, candidates.len());
            candidates.push(c);
        }
    };

    let longest = outcomes.iter().map(|o| o.routes.len()).max().unwrap_or(0);
    'rounds: for rank in 0..longest {
        for outcome in &outcomes {
            let Some(vr) = outcome.routes.get(rank) else { continue };
            stats.virtual_routes += 1;
            let Some(c) = translate(city, config, vr, &origin_walk, &dest_walk)? else { continue };
            let variants = augment(city, config, &c);
            admit(c, &mut stats, &mut candidates);
            for v in variants {
                stats.augmented += 1;
                admit(v, &mut stats, &mut candidates);
            }
            if candidates.len() >= limits.max_candidates {
                break 'rounds;
            }
            if deadline.is_some_and(|dl| Instant::now() >= dl) {
                timed_out = true;
                break 'rounds;
            }
        }
    }
    candidates.truncate(limits.max_candidates);
    for c in &mut candidates {
        c.provenance.cost_kinds.sort_by_key(|k| k.index());
    }
    let status = if timed_out {
        CandidateStatus::TimeBudgetExceeded
    } else if candidates.is_empty() {
        CandidateStatus::Unreachable
    } else {
        CandidateStatus::Ok
    };
    Ok(CandidateSet { candidates, status, stats })
}
