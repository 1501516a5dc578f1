//! Exact walking distances for checking the binder: brute-force projection
//! plus a plain O(n²) Dijkstra on a road graph split at every projected point.

use crate::geo::{project_onto_segment, GeoPoint, LocalFrame};
use crate::model::RoadNetwork;

use super::BinderConfig;

/// Every segment within `radius` of `p`, nearest first, as (segment, offset, distance).
pub fn brute_segments(road: &RoadNetwork, p: &GeoPoint, radius: f64) -> Vec<(u32, f64, f64)> {
    let frame = LocalFrame::new(*p);
    let mut v: Vec<(u32, f64, f64)> = (0..road.segments.len())
        .filter_map(|s| {
            let (a, b) = road.endpoints(s);
            let pr = project_onto_segment(
                &frame,
                p,
                &road.intersections[a as usize].location,
                &road.intersections[b as usize].location,
            );
            (pr.distance_m <= radius).then(|| (s as u32, pr.t * road.segments[s].length_m, pr.distance_m))
        })
        .collect();
    v.sort_by(|x, y| x.2.total_cmp(&y.2).then(x.0.cmp(&y.0)));
    v
}

struct SplitGraph {
    adj: Vec<Vec<(usize, f64)>>,
}

impl SplitGraph {
    /// `points` are (segment, offset) pairs; returns the graph and the node of each point.
    fn new(road: &RoadNetwork, points: &[(u32, f64)]) -> (Self, Vec<usize>) {
        let n0 = road.intersections.len();
        let mut on_seg: Vec<Vec<(f64, usize)>> = vec![Vec::new(); road.segments.len()];
        let mut ids = Vec::new();
        for (i, &(s, off)) in points.iter().enumerate() {
            on_seg[s as usize].push((off, n0 + i));
            ids.push(n0 + i);
        }
        let mut adj = vec![Vec::new(); n0 + points.len()];
        for (s, pts) in on_seg.iter_mut().enumerate() {
            let (a, b) = road.endpoints(s);
            pts.push((0.0, a as usize));
            pts.push((road.segments[s].length_m, b as usize));
            pts.sort_by(|x, y| x.0.total_cmp(&y.0));
            for w in pts.windows(2) {
                let d = w[1].0 - w[0].0;
                adj[w[0].1].push((w[1].1, d));
                adj[w[1].1].push((w[0].1, d));
            }
        }
        (Self { adj }, ids)
    }

    fn dijkstra(&self, sources: &[(usize, f64)]) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.adj.len()];
        let mut done = vec![false; self.adj.len()];
        for &(s, c) in sources {
            dist[s] = dist[s].min(c);
        }
        // O(n^2) selection keeps the oracle obviously correct.
        while let Some(u) =
            (0..dist.len()).filter(|&i| !done[i] && dist[i].is_finite()).min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
        {
            done[u] = true;
            for &(v, w) in &self.adj[u] {
                if dist[u] + w < dist[v] {
                    dist[v] = dist[u] + w;
                }
            }
        }
        dist
    }
}

pub struct WalkOracle<'a> {
    road: &'a RoadNetwork,
    stations: Vec<(u32, f64, f64)>,
    cfg: BinderConfig,
}

impl<'a> WalkOracle<'a> {
    /// Every station must lie within `projection_radius_m` of some segment.
    pub fn new(road: &'a RoadNetwork, stations: &[GeoPoint], cfg: &BinderConfig) -> Self {
        let stations = stations.iter().map(|p| brute_segments(road, p, cfg.projection_radius_m)[0]).collect();
        Self { road, stations, cfg: cfg.clone() }
    }

    fn points(&self, extra: &[(u32, f64)]) -> (SplitGraph, Vec<usize>) {
        let mut pts: Vec<(u32, f64)> = self.stations.iter().map(|s| (s.0, s.1)).collect();
        pts.extend_from_slice(extra);
        SplitGraph::new(self.road, &pts)
    }

    /// Exact walking distance from intersection `u` to every station.
    pub fn from_intersection(&self, u: u32) -> Vec<f64> {
        let (g, ids) = self.points(&[]);
        let dist = g.dijkstra(&[(u as usize, 0.0)]);
        self.stations.iter().enumerate().map(|(i, s)| dist[ids[i]] + s.2).collect()
    }

    /// Exact walking distance from a raw location to every station.
    pub fn from_location(&self, p: &GeoPoint) -> Vec<f64> {
        let found = brute_segments(self.road, p, self.cfg.projection_radius_m);
        let Some(nearest) = found.first().map(|f| f.2) else {
            return vec![f64::INFINITY; self.stations.len()];
        };
        let entries: Vec<_> = found.into_iter().filter(|f| f.2 <= nearest + self.cfg.segment_slack_m).collect();
        let extra: Vec<(u32, f64)> = entries.iter().map(|e| (e.0, e.1)).collect();
        let (g, ids) = self.points(&extra);
        let n = self.stations.len();
        let sources: Vec<(usize, f64)> = entries.iter().enumerate().map(|(i, e)| (ids[n + i], e.2)).collect();
        let dist = g.dijkstra(&sources);
        self.stations.iter().enumerate().map(|(i, s)| dist[ids[i]] + s.2).collect()
    }
}
