//! The public transportation graph: per city, one physical multigraph of
//! stations plus one virtual graph per travel-cost kind.
//!
//! Physical edges connect every ordered pair of stops on a line (skip-stop
//! edges), so a single edge covers an entire ride. Virtual nodes are
//! `(station, line)` incidences; ride edges mirror the physical edges of their
//! line and transfer edges connect the virtual nodes that share a station.
//! The three virtual graphs share one topology and differ only in weights.

pub mod io;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoPoint, GridIndex};
use crate::model::{CityDataset, PhysicalStation, TransportLine, TransportMode};

pub use io::{load_ptg, save_ptg, PTG_MAGIC, PTG_VERSION};

pub type StationIdx = u32;
pub type LineIdx = u32;
pub type VirtualId = u32;

#[derive(Debug, Error)]
pub enum PtgError {
    #[error("negative {kind} weight {weight} on edge {from}->{to}")]
    NegativeWeight { kind: CostKind, from: VirtualId, to: VirtualId, weight: f64 },
    #[error("city {0} appears twice")]
    DuplicateCity(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    Distance,
    TravelTime,
    WalkDistance,
}

impl CostKind {
    pub const ALL: [CostKind; 3] = [CostKind::Distance, CostKind::TravelTime, CostKind::WalkDistance];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostKind::Distance => "distance",
            CostKind::TravelTime => "travel_time",
            CostKind::WalkDistance => "walk_distance",
        })
    }
}

/// Edge-weight proxies for the three virtual graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightConfig {
    /// Walk between platforms of one station, meters.
    pub transfer_walk_m: f64,
    /// Per-station override of `transfer_walk_m`, keyed by station id.
    pub station_transfer_walk_m: BTreeMap<String, f64>,
    /// Fixed time cost of changing vehicles, seconds.
    pub transfer_penalty_s: f64,
    pub walk_speed_mps: f64,
    /// Longest skip-stop edge in stop hops; `None` connects every downstream pair.
    pub max_skip: Option<u32>,
    /// Also link different stations closer than this many meters.
    pub nearby_transfer_m: Option<f64>,
    /// Recorded in the build metadata; kept out of the compiler's own clock
    /// so compilation stays a pure function of its inputs.
    pub build_timestamp: i64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            transfer_walk_m: 100.0,
            station_transfer_walk_m: BTreeMap::new(),
            transfer_penalty_s: 60.0,
            walk_speed_mps: 1.25,
            max_skip: None,
            nearby_transfer_m: None,
            build_timestamp: 0,
        }
    }
}

/// A line with its stops resolved to station indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledLine {
    pub id: String,
    pub name: String,
    pub mode: TransportMode,
    pub stops: Vec<StationIdx>,
    /// Polyline distance from the first stop to each stop, meters.
    pub cumulative_m: Vec<f64>,
    pub headway_s: f64,
    pub speed_mps: f64,
    pub fare: f64,
    pub service_window: [u32; 2],
    pub congestion: f64,
}

impl CompiledLine {
    pub fn position(&self, station: StationIdx) -> Option<usize> {
        self.stops.iter().position(|s| *s == station)
    }

    pub fn in_service(&self, minute_of_day: u32) -> bool {
        let [start, end] = self.service_window;
        if start <= end {
            (start..=end).contains(&minute_of_day)
        } else {
            minute_of_day >= start || minute_of_day <= end
        }
    }

    pub fn expected_wait_s(&self) -> f64 {
        self.headway_s / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalEdge {
    pub id: u32,
    pub origin: StationIdx,
    pub dest: StationIdx,
    pub line: LineIdx,
    /// Intermediate stops skipped by this edge.
    pub hops: u32,
    pub length_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalGraph {
    pub stations: Vec<PhysicalStation>,
    pub edges: Vec<PhysicalEdge>,
    /// Edge ids by origin station.
    pub adjacency: Vec<Vec<u32>>,
}

impl PhysicalGraph {
    /// All edges from `origin` to `dest`, one per line serving both in order.
    pub fn parallel_edges(&self, origin: StationIdx, dest: StationIdx) -> impl Iterator<Item = &PhysicalEdge> {
        self.adjacency[origin as usize].iter().map(|&e| &self.edges[e as usize]).filter(move |e| e.dest == dest)
    }

    pub fn edges_of_line(&self, line: LineIdx) -> impl Iterator<Item = &PhysicalEdge> {
        self.edges.iter().filter(move |e| e.line == line)
    }
}

pub fn build_physical_graph(dataset: &CityDataset, config: &WeightConfig) -> (PhysicalGraph, Vec<CompiledLine>) {
    let index = dataset.station_index();
    let lines: Vec<CompiledLine> = dataset.lines.iter().map(|l| compile_line(l, &index, dataset)).collect();
    let mut edges = Vec::new();
    let mut adjacency = vec![Vec::new(); dataset.stations.len()];
    for (li, line) in lines.iter().enumerate() {
        let n = line.stops.len();
        for i in 0..n {
            for j in i + 1..n {
                let hops = (j - i - 1) as u32;
                if config.max_skip.is_some_and(|m| hops > m) {
                    break;
                }
                let id = edges.len() as u32;
                adjacency[line.stops[i] as usize].push(id);
                edges.push(PhysicalEdge {
                    id,
                    origin: line.stops[i],
                    dest: line.stops[j],
                    line: li as LineIdx,
                    hops,
                    length_m: line.cumulative_m[j] - line.cumulative_m[i],
                });
            }
        }
    }
    (PhysicalGraph { stations: dataset.stations.clone(), edges, adjacency }, lines)
}

fn compile_line(l: &TransportLine, index: &HashMap<&str, u32>, ds: &CityDataset) -> CompiledLine {
    let stops: Vec<StationIdx> = l.stops.iter().map(|s| index[s.as_str()]).collect();
    let mut cumulative_m = Vec::with_capacity(stops.len());
    let mut acc = 0.0;
    for (k, s) in stops.iter().enumerate() {
        if k > 0 {
            acc += ds.stations[stops[k - 1] as usize].location.haversine_m(&ds.stations[*s as usize].location);
        }
        cumulative_m.push(acc);
    }
    CompiledLine {
        id: l.id.clone(),
        name: l.display_name().to_string(),
        mode: l.mode,
        stops,
        cumulative_m,
        headway_s: l.headway_s,
        speed_mps: l.speed_mps,
        fare: l.fare,
        service_window: l.service_window,
        congestion: l.congestion,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VirtualStation {
    pub physical: StationIdx,
    pub line: LineIdx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    Ride,
    Transfer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualEdge {
    pub from: VirtualId,
    pub to: VirtualId,
    pub kind: EdgeKind,
    /// Physical edge a ride edge mirrors; walking distance for a transfer.
    pub physical_edge: Option<u32>,
    pub walk_m: f64,
}

/// Node and edge sets shared by every cost kind. Edges are sorted by
/// `(from, to)` and indexed in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualTopology {
    pub nodes: Vec<VirtualStation>,
    pub edges: Vec<VirtualEdge>,
    out_offsets: Vec<u32>,
    in_offsets: Vec<u32>,
    in_edges: Vec<u32>,
    by_station: Vec<Vec<VirtualId>>,
}

impl VirtualTopology {
    pub fn from_parts(nodes: Vec<VirtualStation>, mut edges: Vec<VirtualEdge>, n_stations: usize) -> Self {
        edges.sort_by_key(|e| (e.from, e.to, e.kind));
        let n = nodes.len();
        let mut out_offsets = vec![0u32; n + 1];
        let mut in_count = vec![0u32; n + 1];
        for e in &edges {
            out_offsets[e.from as usize + 1] += 1;
            in_count[e.to as usize + 1] += 1;
        }
        for i in 0..n {
            out_offsets[i + 1] += out_offsets[i];
            in_count[i + 1] += in_count[i];
        }
        let in_offsets = in_count.clone();
        let mut fill = in_count;
        let mut in_edges = vec![0u32; edges.len()];
        for (i, e) in edges.iter().enumerate() {
            let slot = &mut fill[e.to as usize];
            in_edges[*slot as usize] = i as u32;
            *slot += 1;
        }
        let mut by_station = vec![Vec::new(); n_stations];
        for (v, node) in nodes.iter().enumerate() {
            by_station[node.physical as usize].push(v as VirtualId);
        }
        Self { nodes, edges, out_offsets, in_offsets, in_edges, by_station }
    }

    pub fn out_edges(&self, v: VirtualId) -> std::ops::Range<usize> {
        self.out_offsets[v as usize] as usize..self.out_offsets[v as usize + 1] as usize
    }

    /// Indices into `edges` of the edges entering `v`.
    pub fn in_edges(&self, v: VirtualId) -> &[u32] {
        &self.in_edges[self.in_offsets[v as usize] as usize..self.in_offsets[v as usize + 1] as usize]
    }

    pub fn station_of(&self, v: VirtualId) -> StationIdx {
        self.nodes[v as usize].physical
    }

    /// Virtual nodes located at a physical station.
    pub fn at_station(&self, s: StationIdx) -> &[VirtualId] {
        self.by_station.get(s as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn find_edge(&self, from: VirtualId, to: VirtualId) -> Option<usize> {
        self.out_edges(from).find(|&i| self.edges[i].to == to)
    }
}

/// A weighted view of the shared topology for one cost kind.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualGraph {
    pub cost_kind: CostKind,
    pub topology: Arc<VirtualTopology>,
    pub weights: Vec<f64>,
}

impl VirtualGraph {
    pub fn node_count(&self) -> usize {
        self.topology.nodes.len()
    }

    /// The physical station a virtual node maps to.
    pub fn station_map(&self, v: VirtualId) -> StationIdx {
        self.topology.station_of(v)
    }
}

fn transfer_walk(config: &WeightConfig, station: &PhysicalStation) -> f64 {
    config.station_transfer_walk_m.get(&station.id).copied().unwrap_or(config.transfer_walk_m)
}

pub fn build_topology(physical: &PhysicalGraph, lines: &[CompiledLine], config: &WeightConfig) -> VirtualTopology {
    let mut nodes = Vec::new();
    let mut node_of: HashMap<(StationIdx, LineIdx), VirtualId> = HashMap::new();
    for (li, line) in lines.iter().enumerate() {
        for &s in &line.stops {
            node_of.insert((s, li as LineIdx), nodes.len() as VirtualId);
            nodes.push(VirtualStation { physical: s, line: li as LineIdx });
        }
    }
    let mut edges: Vec<VirtualEdge> = physical
        .edges
        .iter()
        .map(|e| VirtualEdge {
            from: node_of[&(e.origin, e.line)],
            to: node_of[&(e.dest, e.line)],
            kind: EdgeKind::Ride,
            physical_edge: Some(e.id),
            walk_m: 0.0,
        })
        .collect();

    let mut at_station: Vec<Vec<VirtualId>> = vec![Vec::new(); physical.stations.len()];
    for (v, n) in nodes.iter().enumerate() {
        at_station[n.physical as usize].push(v as VirtualId);
    }
    for (s, members) in at_station.iter().enumerate() {
        let walk = transfer_walk(config, &physical.stations[s]);
        for &a in members {
            for &b in members {
                if a != b {
                    edges.push(VirtualEdge { from: a, to: b, kind: EdgeKind::Transfer, physical_edge: None, walk_m: walk });
                }
            }
        }
    }
    if let Some(radius) = config.nearby_transfer_m {
        let Some(anchor) = physical.stations.first().map(|s| s.location) else {
            return VirtualTopology::from_parts(nodes, edges, physical.stations.len());
        };
        let mut grid = GridIndex::new(anchor, radius.max(1.0));
        for (i, s) in physical.stations.iter().enumerate() {
            grid.insert(i as u32, &s.location);
        }
        for (s, members) in at_station.iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let here: GeoPoint = physical.stations[s].location;
            for t in grid.query_radius(&here, radius) {
                let t = t as usize;
                if t == s {
                    continue;
                }
                let d = here.haversine_m(&physical.stations[t].location);
                if d >= radius {
                    continue;
                }
                for &a in members {
                    for &b in &at_station[t] {
                        if nodes[a as usize].line != nodes[b as usize].line {
                            edges.push(VirtualEdge { from: a, to: b, kind: EdgeKind::Transfer, physical_edge: None, walk_m: d });
                        }
                    }
                }
            }
        }
    }
    VirtualTopology::from_parts(nodes, edges, physical.stations.len())
}

/// Weight of every topology edge under `kind`.
///
/// Ride edges carry only in-vehicle cost; the expected boarding wait
/// (headway / 2) sits on the transfer edge entering the boarded line, and
/// on the search's source offsets for the first boarding.
pub fn edge_weights(
    topology: &VirtualTopology,
    physical: &PhysicalGraph,
    lines: &[CompiledLine],
    kind: CostKind,
    config: &WeightConfig,
) -> Result<Vec<f64>, PtgError> {
    topology
        .edges
        .iter()
        .map(|e| {
            let w = match (e.kind, kind) {
                (EdgeKind::Ride, CostKind::Distance) => physical.edges[e.physical_edge.unwrap() as usize].length_m,
                (EdgeKind::Ride, CostKind::TravelTime) => {
                    let pe = &physical.edges[e.physical_edge.unwrap() as usize];
                    pe.length_m / lines[pe.line as usize].speed_mps
                }
                (EdgeKind::Ride, CostKind::WalkDistance) => 0.0,
                (EdgeKind::Transfer, CostKind::Distance) => {
                    if topology.station_of(e.from) == topology.station_of(e.to) {
                        0.0
                    } else {
                        e.walk_m
                    }
                }
                (EdgeKind::Transfer, CostKind::WalkDistance) => e.walk_m,
                (EdgeKind::Transfer, CostKind::TravelTime) => {
                    let boarded = &lines[topology.nodes[e.to as usize].line as usize];
                    let walk_s = if topology.station_of(e.from) == topology.station_of(e.to) {
                        0.0
                    } else {
                        e.walk_m / config.walk_speed_mps
                    };
                    config.transfer_penalty_s + boarded.expected_wait_s() + walk_s
                }
            };
            if w < 0.0 || w.is_nan() {
                Err(PtgError::NegativeWeight { kind, from: e.from, to: e.to, weight: w })
            } else {
                Ok(w)
            }
        })
        .collect()
}

pub fn build_virtual_graph(
    physical: &PhysicalGraph,
    lines: &[CompiledLine],
    kind: CostKind,
    config: &WeightConfig,
) -> Result<VirtualGraph, PtgError> {
    let topology = Arc::new(build_topology(physical, lines, config));
    let weights = edge_weights(&topology, physical, lines, kind, config)?;
    Ok(VirtualGraph { cost_kind: kind, topology, weights })
}

/// One city's compiled graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct CityGraph {
    pub city: String,
    pub physical: PhysicalGraph,
    pub lines: Vec<CompiledLine>,
    /// Indexed by [`CostKind::index`].
    pub virtuals: [VirtualGraph; 3],
}

impl CityGraph {
    pub fn virtual_graph(&self, kind: CostKind) -> &VirtualGraph {
        &self.virtuals[kind.index()]
    }

    pub fn topology(&self) -> &VirtualTopology {
        &self.virtuals[0].topology
    }

    pub fn station_index(&self, id: &str) -> Option<StationIdx> {
        self.physical.stations.iter().position(|s| s.id == id).map(|i| i as StationIdx)
    }

    pub fn line_index(&self, id: &str) -> Option<LineIdx> {
        self.lines.iter().position(|l| l.id == id).map(|i| i as LineIdx)
    }

    /// Lines serving a station, in line order.
    pub fn lines_at(&self, s: StationIdx) -> Vec<LineIdx> {
        self.topology().at_station(s).iter().map(|&v| self.topology().nodes[v as usize].line).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildMeta {
    /// FNV-1a over the canonical JSON of every input dataset.
    pub dataset_hash: u64,
    pub built_at: i64,
    pub config: WeightConfig,
}

/// Compiled graphs for a set of disjoint cities.
#[derive(Debug, Clone, PartialEq)]
pub struct Ptg {
    pub cities: BTreeMap<String, CityGraph>,
    pub meta: BuildMeta,
}

impl Ptg {
    pub fn city(&self, id: &str) -> Option<&CityGraph> {
        self.cities.get(id)
    }
}

pub fn compile_city(dataset: &CityDataset, config: &WeightConfig) -> Result<CityGraph, PtgError> {
    let (physical, lines) = build_physical_graph(dataset, config);
    let topology = Arc::new(build_topology(&physical, &lines, config));
    let mut graphs = Vec::with_capacity(3);
    for kind in CostKind::ALL {
        let weights = edge_weights(&topology, &physical, &lines, kind, config)?;
        graphs.push(VirtualGraph { cost_kind: kind, topology: topology.clone(), weights });
    }
    let virtuals: [VirtualGraph; 3] = graphs.try_into().expect("three cost kinds");
    Ok(CityGraph { city: dataset.city.clone(), physical, lines, virtuals })
}

pub fn dataset_hash<'a>(datasets: impl IntoIterator<Item = &'a CityDataset>) -> u64 {
    use std::hash::Hasher;
    let mut h = fnv::FnvHasher::default();
    for ds in datasets {
        h.write(ds.city.as_bytes());
        for s in &ds.stations {
            h.write(serde_json::to_string(s).expect("serializable").as_bytes());
        }
        for l in &ds.lines {
            h.write(serde_json::to_string(l).expect("serializable").as_bytes());
        }
    }
    h.finish()
}

/// Compiles every city. Cities share nothing, so no edge crosses a city
/// boundary.
pub fn compile_ptg(datasets: &BTreeMap<String, CityDataset>, config: &WeightConfig) -> Result<Ptg, PtgError> {
    let mut cities = BTreeMap::new();
    for (key, ds) in datasets {
        if cities.insert(key.clone(), compile_city(ds, config)?).is_some() {
            return Err(PtgError::DuplicateCity(key.clone()));
        }
    }
    Ok(Ptg {
        cities,
        meta: BuildMeta {
            dataset_hash: dataset_hash(datasets.values()),
            built_at: config.build_timestamp,
            config: config.clone(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::six_station_city;
    use crate::geo::GeoPoint;
    use crate::model::{RoadNetwork, TransportLine};

    fn edge_set(g: &CityGraph, line: &str) -> Vec<(String, String)> {
        let li = g.line_index(line).unwrap();
        let mut v: Vec<_> = g
            .physical
            .edges_of_line(li)
            .map(|e| (g.physical.stations[e.origin as usize].id.clone(), g.physical.stations[e.dest as usize].id.clone()))
            .collect();
        v.sort();
        v
    }

    #[test]
    fn three_stop_line_yields_all_downstream_pairs() {
        let g = compile_city(&six_station_city(), &WeightConfig::default()).unwrap();
        let pairs = |v: &[(&str, &str)]| v.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect::<Vec<_>>();
        assert_eq!(edge_set(&g, "3"), pairs(&[("p1", "p2"), ("p1", "p3"), ("p2", "p3")]));
    }

    #[test]
    fn two_lines_give_parallel_edges() {
        let g = compile_city(&six_station_city(), &WeightConfig::default()).unwrap();
        let (p5, p6) = (g.station_index("p5").unwrap(), g.station_index("p6").unwrap());
        let lines: Vec<_> = g.physical.parallel_edges(p5, p6).map(|e| g.lines[e.line as usize].id.as_str()).collect();
        assert_eq!(lines, ["1", "2"]);
    }

    fn two_stop_city() -> CityDataset {
        let a = GeoPoint::new(0.0, 0.0);
        let stations = vec![
            PhysicalStation { id: "a".into(), location: a, name: "a".into(), city: "x".into() },
            PhysicalStation { id: "b".into(), location: a.offset_m(6000.0, 0.0), name: "b".into(), city: "x".into() },
        ];
        let lines = vec![TransportLine {
            id: "L".into(),
            name: String::new(),
            mode: TransportMode::Bus,
            stops: vec!["a".into(), "b".into()],
            headway_s: 600.0,
            speed_mps: 10.0,
            fare: 1.0,
            service_window: [0, 1439],
            congestion: 0.0,
        }];
        CityDataset::new("x", stations, lines, RoadNetwork::default(), vec![], vec![]).unwrap()
    }

    #[test]
    fn two_stop_line_has_one_edge() {
        let g = compile_city(&two_stop_city(), &WeightConfig::default()).unwrap();
        assert_eq!(g.physical.edges.len(), 1);
    }

    #[test]
    fn travel_time_ride_and_boarding_weights() {
        let g = compile_city(&two_stop_city(), &WeightConfig::default()).unwrap();
        let tt = g.virtual_graph(CostKind::TravelTime);
        // 6000 m at 10 m/s
        assert!((tt.weights[0] - 600.0).abs() < 0.5, "{}", tt.weights[0]);
        let exact = g.physical.edges[0].length_m / 10.0;
        assert_eq!(tt.weights[0], exact);
        assert_eq!(g.lines[0].expected_wait_s(), 300.0);
    }

    #[test]
    fn co_located_lines_get_transfer_edges() {
        let g = compile_city(&six_station_city(), &WeightConfig::default()).unwrap();
        let p5 = g.station_index("p5").unwrap();
        let topo = g.topology();
        let at = topo.at_station(p5);
        assert_eq!(at.len(), 2);
        assert!(topo.find_edge(at[0], at[1]).is_some() && topo.find_edge(at[1], at[0]).is_some());
        let walk = g.virtual_graph(CostKind::WalkDistance);
        let dist = g.virtual_graph(CostKind::Distance);
        let time = g.virtual_graph(CostKind::TravelTime);
        for (i, e) in topo.edges.iter().enumerate() {
            match e.kind {
                EdgeKind::Ride => assert_eq!(walk.weights[i], 0.0),
                EdgeKind::Transfer => {
                    assert_eq!(walk.weights[i], 100.0);
                    assert_eq!(dist.weights[i], 0.0);
                    let boarded = &g.lines[topo.nodes[e.to as usize].line as usize];
                    assert_eq!(time.weights[i], 60.0 + boarded.headway_s / 2.0);
                }
            }
        }
    }

    #[test]
    fn max_skip_caps_edges() {
        let cfg = WeightConfig { max_skip: Some(0), ..Default::default() };
        let g = compile_city(&six_station_city(), &cfg).unwrap();
        // consecutive pairs only: 3 + 2 + 2
        assert_eq!(g.physical.edges.len(), 7);
    }

    #[test]
    fn empty_city_compiles_to_empty_graphs() {
        let ds = CityDataset::new("e", vec![], vec![], RoadNetwork::default(), vec![], vec![]).unwrap();
        let g = compile_city(&ds, &WeightConfig::default()).unwrap();
        assert!(g.physical.edges.is_empty());
        assert_eq!(g.virtual_graph(CostKind::TravelTime).node_count(), 0);
    }

    #[test]
    fn nearby_transfers_link_distinct_stations() {
        let cfg = WeightConfig { nearby_transfer_m: Some(2200.0), ..Default::default() };
        let g = compile_city(&six_station_city(), &cfg).unwrap();
        let topo = g.topology();
        assert!(topo.edges.iter().any(|e| e.kind == EdgeKind::Transfer && topo.station_of(e.from) != topo.station_of(e.to)));
        let plain = compile_city(&six_station_city(), &WeightConfig::default()).unwrap();
        assert!(plain
            .topology()
            .edges
            .iter()
            .all(|e| e.kind == EdgeKind::Ride || plain.topology().station_of(e.from) == plain.topology().station_of(e.to)));
    }

    #[test]
    fn cities_stay_disjoint() {
        let mut sets = BTreeMap::new();
        sets.insert("demo".to_string(), six_station_city());
        sets.insert("x".to_string(), two_stop_city());
        let ptg = compile_ptg(&sets, &WeightConfig::default()).unwrap();
        assert_eq!(ptg.cities.len(), 2);
        for g in ptg.cities.values() {
            let n = g.physical.stations.len() as u32;
            assert!(g.physical.edges.iter().all(|e| e.origin < n && e.dest < n));
        }
    }
}
