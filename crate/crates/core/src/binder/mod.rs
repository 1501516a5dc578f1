//! Binding arbitrary coordinates to nearby boardable stations by walking
//! distance over the road network.
//!
//! Offline, every station is projected onto its nearest road segment and a
//! bounded Dijkstra from that projection records the road distance to every
//! intersection within `lambda_m`. Online, a location is projected onto the
//! road (directly or via a nearby POI) and the distance to a station is
//!
//! ```text
//! walk(location -> segment) + along(segment -> endpoint u) + cached(u -> station)
//! ```
//!
//! minimized over both endpoints of every candidate segment. A station
//! projected onto the same segment as the location is also reached directly
//! along that segment.

pub mod io;
pub mod reference;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::geo::{project_onto_segment, GeoPoint, GridIndex, LocalFrame};
use crate::model::{Poi, RoadNetwork};
use crate::ptg::{CityGraph, StationIdx};

pub use io::{decode_cache_set, encode_cache_set, load_cache_set, save_cache_set, CacheSet, SBC_MAGIC, SBC_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinderConfig {
    /// Only station distances below this many meters are cached.
    pub lambda_m: f64,
    pub cell_size_m: f64,
    /// A station farther than this from every segment cannot be projected.
    pub projection_radius_m: f64,
    /// Query locations this close to a POI adopt the POI's projection.
    pub poi_snap_m: f64,
    /// Segments within this margin of the nearest one are also tried.
    pub segment_slack_m: f64,
    /// Default number of stations returned per binding.
    pub k: usize,
}

impl Default for BinderConfig {
    fn default() -> Self {
        Self { lambda_m: 1500.0, cell_size_m: 500.0, projection_radius_m: 200.0, poi_snap_m: 50.0, segment_slack_m: 25.0, k: 3 }
    }
}

/// Where a station meets the road.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationProjection {
    pub station: StationIdx,
    pub station_id: String,
    pub segment: u32,
    /// Distance along the segment from its `from` endpoint, meters.
    pub offset_m: f64,
    pub walk_to_segment_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub station: StationIdx,
    pub distance_m: f64,
}

/// Precomputed intersection-to-station road distances for one city.
#[derive(Debug, Clone, PartialEq)]
pub struct StationCache {
    pub city: String,
    pub config: BinderConfig,
    pub intersection_grid: GridIndex,
    pub segment_grid: GridIndex,
    pub poi_grid: GridIndex,
    /// Per intersection, stations with road distance below `lambda_m`,
    /// ascending by distance.
    pub entries: Vec<Vec<CacheEntry>>,
    /// Indexed by position in this vector; see `projection_of`.
    pub projections: Vec<StationProjection>,
    /// Projection indices per road segment.
    pub by_segment: BTreeMap<u32, Vec<u32>>,
    /// Stations with no segment within `projection_radius_m`.
    pub unprojectable: Vec<StationIdx>,
    /// Resolved `projected_segment` of every POI, `u32::MAX` if unknown.
    pub poi_segments: Vec<u32>,
    pub road_fingerprint: (u64, u64),
    station_lookup: Vec<u32>,
}

impl StationCache {
    pub fn projection_of(&self, station: StationIdx) -> Option<&StationProjection> {
        let i = *self.station_lookup.get(station as usize)?;
        self.projections.get(i as usize)
    }

    fn index_stations(&mut self) {
        let n = self.projections.iter().map(|p| p.station as usize + 1).max().unwrap_or(0);
        self.station_lookup = vec![u32::MAX; n];
        for (i, p) in self.projections.iter().enumerate() {
            self.station_lookup[p.station as usize] = i as u32;
        }
    }

    pub fn lambda_m(&self) -> f64 {
        self.config.lambda_m
    }
}

/// Undirected walking adjacency: pedestrians ignore one-way restrictions.
pub(crate) fn walk_adjacency(road: &RoadNetwork) -> Vec<Vec<(u32, f64)>> {
    let mut adj = vec![Vec::new(); road.intersections.len()];
    for (i, s) in road.segments.iter().enumerate() {
        let (a, b) = road.endpoints(i);
        adj[a as usize].push((b, s.length_m));
        adj[b as usize].push((a, s.length_m));
    }
    adj
}

#[derive(Clone, Copy, PartialEq)]
struct Queued {
    cost: f64,
    node: u32,
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

/// Multi-source Dijkstra over the walking graph, settling only nodes closer
/// than `limit`. Returns `(node, distance)` in settle order.
pub(crate) fn bounded_dijkstra(adj: &[Vec<(u32, f64)>], sources: &[(u32, f64)], limit: f64) -> Vec<(u32, f64)> {
    let mut best: BTreeMap<u32, f64> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    for &(node, cost) in sources {
        if cost < limit && best.get(&node).is_none_or(|d| cost < *d) {
            best.insert(node, cost);
            heap.push(Queued { cost, node });
        }
    }
    let mut settled = Vec::new();
    let mut done = std::collections::BTreeSet::new();
    while let Some(Queued { cost, node }) = heap.pop() {
        if !done.insert(node) {
            continue;
        }
        settled.push((node, cost));
        for &(next, len) in &adj[node as usize] {
            let c = cost + len;
            if c < limit && !done.contains(&next) && best.get(&next).is_none_or(|d| c < *d) {
                best.insert(next, c);
                heap.push(Queued { cost: c, node: next });
            }
        }
    }
    settled
}

fn segment_points(road: &RoadNetwork, seg: usize) -> (GeoPoint, GeoPoint) {
    let (a, b) = road.endpoints(seg);
    (road.intersections[a as usize].location, road.intersections[b as usize].location)
}

fn road_anchor(road: &RoadNetwork) -> GeoPoint {
    road.intersections.first().map(|n| n.location).unwrap_or(GeoPoint::new(0.0, 0.0))
}

fn segment_grid(road: &RoadNetwork, cell_size_m: f64) -> GridIndex {
    let mut g = GridIndex::new(road_anchor(road), cell_size_m);
    for i in 0..road.segments.len() {
        let (a, b) = segment_points(road, i);
        g.insert_span(i as u32, &a, &b);
    }
    g
}

/// Nearest segment to `p` (by perpendicular distance) among those
/// registered near it, plus every other segment within `slack_m` of that
/// nearest distance. Each item is `(segment, offset_m, distance_m)`.
fn candidate_segments(road: &RoadNetwork, grid: &GridIndex, p: &GeoPoint, radius_m: f64, slack_m: f64) -> Vec<(u32, f64, f64)> {
    let frame = LocalFrame::new(*p);
    let mut found: Vec<(u32, f64, f64)> = grid
        .query_radius(p, radius_m)
        .into_iter()
        .filter_map(|s| {
            let (a, b) = segment_points(road, s as usize);
            let pr = project_onto_segment(&frame, p, &a, &b);
            (pr.distance_m <= radius_m).then(|| (s, pr.t * road.segments[s as usize].length_m, pr.distance_m))
        })
        .collect();
    let Some(nearest) = found.iter().map(|f| f.2).min_by(f64::total_cmp) else {
        return found;
    };
    found.retain(|f| f.2 <= nearest + slack_m);
    found.sort_by(|x, y| x.2.total_cmp(&y.2).then(x.0.cmp(&y.0)));
    found
}

/// Builds the cache for `stations` (index and location of every boardable
/// station of the city).
pub fn build_station_cache(
    city: &str,
    road: &RoadNetwork,
    stations: &[(StationIdx, String, GeoPoint)],
    pois: &[Poi],
    config: &BinderConfig,
) -> StationCache {
    let anchor = road_anchor(road);
    let mut intersection_grid = GridIndex::new(anchor, config.cell_size_m);
    for (i, n) in road.intersections.iter().enumerate() {
        intersection_grid.insert(i as u32, &n.location);
    }
    let segment_grid = segment_grid(road, config.cell_size_m);
    let mut poi_grid = GridIndex::new(anchor, config.cell_size_m);
    for (i, p) in pois.iter().enumerate() {
        poi_grid.insert(i as u32, &p.location);
    }

    let mut projections = Vec::new();
    let mut unprojectable = Vec::new();
    for (idx, id, loc) in stations {
        match candidate_segments(road, &segment_grid, loc, config.projection_radius_m, 0.0).first() {
            Some(&(segment, offset_m, walk)) => projections.push(StationProjection {
                station: *idx,
                station_id: id.clone(),
                segment,
                offset_m,
                walk_to_segment_m: walk,
            }),
            None => unprojectable.push(*idx),
        }
    }

    let adj = walk_adjacency(road);
    let mut entries = vec![Vec::new(); road.intersections.len()];
    let mut by_segment: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (pi, p) in projections.iter().enumerate() {
        by_segment.entry(p.segment).or_default().push(pi as u32);
        let (a, b) = road.endpoints(p.segment as usize);
        let len = road.segments[p.segment as usize].length_m;
        let sources = [(a, p.offset_m + p.walk_to_segment_m), (b, len - p.offset_m + p.walk_to_segment_m)];
        for (u, d) in bounded_dijkstra(&adj, &sources, config.lambda_m) {
            entries[u as usize].push(CacheEntry { station: p.station, distance_m: d });
        }
    }
    for list in &mut entries {
        list.sort_by(|x, y| x.distance_m.total_cmp(&y.distance_m).then(x.station.cmp(&y.station)));
    }
    let segment_ids = road.segment_index();
    let poi_segments = pois.iter().map(|p| segment_ids.get(p.projected_segment.as_str()).copied().unwrap_or(u32::MAX)).collect();
    let mut cache = StationCache {
        city: city.to_string(),
        config: config.clone(),
        intersection_grid,
        segment_grid,
        poi_grid,
        entries,
        projections,
        by_segment,
        unprojectable,
        poi_segments,
        road_fingerprint: (road.intersections.len() as u64, road.segments.len() as u64),
        station_lookup: Vec::new(),
    };
    cache.index_stations();
    cache
}

/// Builds the cache for every station of `city` served by at least one line.
pub fn build_city_cache(city: &CityGraph, road: &RoadNetwork, pois: &[Poi], config: &BinderConfig) -> StationCache {
    let stations: Vec<(StationIdx, String, GeoPoint)> = city
        .physical
        .stations
        .iter()
        .enumerate()
        .filter(|(i, _)| !city.topology().at_station(*i as StationIdx).is_empty())
        .map(|(i, s)| (i as StationIdx, s.id.clone(), s.location))
        .collect();
    build_station_cache(&city.city, road, &stations, pois, config)
}

/// The walk from the query location into the road network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkLeg {
    pub segment: u32,
    /// Entry point on the segment, meters from its `from` endpoint.
    pub offset_m: f64,
    pub walk_to_segment_m: f64,
    /// Intersection the walk passes through; `None` when the station sits on
    /// the entry segment itself.
    pub via: Option<u32>,
    pub snapped_poi: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundStation {
    pub station: StationIdx,
    pub station_id: String,
    pub total_distance_m: f64,
    pub walk_leg: WalkLeg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BindStatus {
    Ok,
    NoStationInRange,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Binding {
    /// Ascending by `total_distance_m`, ties by station id.
    pub stations: Vec<BoundStation>,
    pub status: BindStatus,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    segment: u32,
    offset_m: f64,
    walk_m: f64,
    poi: Option<u32>,
}

fn entries_for(location: &GeoPoint, cache: &StationCache, road: &RoadNetwork, pois: &[Poi]) -> Vec<Entry> {
    let cfg = &cache.config;
    if !pois.is_empty() {
        let nearest = cache
            .poi_grid
            .query_radius(location, cfg.poi_snap_m)
            .into_iter()
            .map(|i| (i, location.haversine_m(&pois[i as usize].location)))
            .filter(|(_, d)| *d <= cfg.poi_snap_m)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        if let Some((pi, d)) = nearest {
            let poi = &pois[pi as usize];
            let seg = cache.poi_segments.get(pi as usize).copied().unwrap_or(u32::MAX) as usize;
            if seg < road.segments.len() {
                let (a, b) = segment_points(road, seg);
                let pr = project_onto_segment(&LocalFrame::new(poi.location), &poi.location, &a, &b);
                return vec![Entry {
                    segment: seg as u32,
                    offset_m: pr.t * road.segments[seg].length_m,
                    walk_m: d + poi.walk_to_segment_m,
                    poi: Some(pi),
                }];
            }
        }
    }
    candidate_segments(road, &cache.segment_grid, location, cfg.projection_radius_m, cfg.segment_slack_m)
        .into_iter()
        .map(|(segment, offset_m, walk_m)| Entry { segment, offset_m, walk_m, poi: None })
        .collect()
}

/// Binds `location` to at most `k` stations, nearest first by walking distance.
pub fn bind(location: &GeoPoint, cache: &StationCache, road: &RoadNetwork, pois: &[Poi], k: usize) -> Binding {
    assert!(k >= 1, "k must be at least 1");
    let mut best: BTreeMap<StationIdx, (f64, WalkLeg)> = BTreeMap::new();
    let mut offer = |station: StationIdx, total: f64, leg: WalkLeg| {
        if best.get(&station).is_none_or(|b| total < b.0) {
            best.insert(station, (total, leg));
        }
    };
    for e in entries_for(location, cache, road, pois) {
        let (a, b) = road.endpoints(e.segment as usize);
        let len = road.segments[e.segment as usize].length_m;
        let leg =
            |via| WalkLeg { segment: e.segment, offset_m: e.offset_m, walk_to_segment_m: e.walk_m, via, snapped_poi: e.poi };
        for (u, along) in [(a, e.offset_m), (b, len - e.offset_m)] {
            for c in &cache.entries[u as usize] {
                offer(c.station, e.walk_m + along + c.distance_m, leg(Some(u)));
            }
        }
        for &pi in cache.by_segment.get(&e.segment).map(Vec::as_slice).unwrap_or(&[]) {
            let p = &cache.projections[pi as usize];
            offer(p.station, e.walk_m + (e.offset_m - p.offset_m).abs() + p.walk_to_segment_m, leg(None));
        }
    }
    let mut stations: Vec<BoundStation> = best
        .into_iter()
        .map(|(station, (total_distance_m, walk_leg))| BoundStation {
            station,
            station_id: cache.projection_of(station).map(|p| p.station_id.clone()).unwrap_or_default(),
            total_distance_m,
            walk_leg,
        })
        .collect();
    stations.sort_by(|x, y| x.total_distance_m.total_cmp(&y.total_distance_m).then_with(|| x.station_id.cmp(&y.station_id)));
    stations.truncate(k);
    let status = if stations.is_empty() { BindStatus::NoStationInRange } else { BindStatus::Ok };
    Binding { stations, status }
}
