//! Small hand-built cities used by tests, examples and the guide.

use crate::geo::GeoPoint;
use crate::model::{
    CityDataset, Intersection, PhysicalStation, Poi, RoadNetwork, RoadSegment, TransportLine, TransportMode, Weather,
    WeatherRecord,
};
use crate::search::{Provenance, RouteCandidate, RouteSegment};
use crate::synth::grid_road;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// South-west anchor of the six-station city.
pub const SIX_STATION_ANCHOR: GeoPoint = GeoPoint::new(31.20, 121.40);

/// Planar position (east, north meters from the anchor) of stations p1..p6.
pub const SIX_STATION_LAYOUT: [(&str, f64, f64); 6] = [
    ("p1", 0.0, 0.0),
    ("p2", 1500.0, 1500.0),
    ("p3", 3000.0, 2500.0),
    ("p4", 2000.0, -500.0),
    ("p5", 4000.0, 0.0),
    ("p6", 6000.0, 500.0),
];

/// Six stations and three lines:
///
/// * line `1` (metro): p1 → p4 → p5 → p6
/// * line `2` (bus):   p2 → p5 → p6
/// * line `3` (bus):   p1 → p2 → p3
///
/// Line 3 yields the three edges (p1,p2), (p1,p3), (p2,p3); lines 1 and 2
/// both run p5 → p6. A 500 m road grid covers the whole area.
pub fn six_station_city() -> CityDataset {
    let anchor = SIX_STATION_ANCHOR;
    let stations = SIX_STATION_LAYOUT
        .iter()
        .map(|(id, e, n)| PhysicalStation {
            id: id.to_string(),
            location: anchor.offset_m(*e, *n),
            name: format!("Station {}", &id[1..]),
            city: "demo".into(),
        })
        .collect();
    let line = |id: &str, mode, stops: &[&str], headway_s, speed_mps, fare| TransportLine {
        id: id.to_string(),
        name: format!("Line {id}"),
        mode,
        stops: stops.iter().map(|s| s.to_string()).collect(),
        headway_s,
        speed_mps,
        fare,
        service_window: [300, 1410],
        congestion: if mode == TransportMode::Bus { 0.3 } else { 0.0 },
    };
    let lines = vec![
        line("1", TransportMode::Metro, &["p1", "p4", "p5", "p6"], 300.0, 12.0, 4.0),
        line("2", TransportMode::Bus, &["p2", "p5", "p6"], 600.0, 7.0, 2.0),
        line("3", TransportMode::Bus, &["p1", "p2", "p3"], 480.0, 7.0, 2.0),
    ];
    let road = grid_road(anchor.offset_m(-1000.0, -1500.0), 10, 17, 500.0, "u");
    let pois = vec![
        Poi {
            id: "office".into(),
            location: anchor.offset_m(-20.0, 30.0),
            primary_category: "business".into(),
            secondary_category: "office".into(),
            projected_segment: road.segments[segment_near(&road, anchor.offset_m(-20.0, 30.0))].id.clone(),
            walk_to_segment_m: 30.0,
        },
        Poi {
            id: "mall".into(),
            location: anchor.offset_m(6010.0, 480.0),
            primary_category: "shopping".into(),
            secondary_category: "mall".into(),
            projected_segment: road.segments[segment_near(&road, anchor.offset_m(6010.0, 480.0))].id.clone(),
            walk_to_segment_m: 20.0,
        },
    ];
    let weather = vec![WeatherRecord {
        timestamp: 1_700_000_000,
        weather: Weather::Sunny,
        temperature_c: 21.0,
        wind_level: 2,
        wind_direction: 4,
        aqi: 40,
    }];
    CityDataset::new("demo", stations, lines, road, pois, weather).expect("fixture is valid")
}

fn segment_near(road: &crate::model::RoadNetwork, p: GeoPoint) -> usize {
    let frame = crate::geo::LocalFrame::new(p);
    (0..road.segments.len())
        .min_by(|&a, &b| {
            let d = |s: usize| {
                let (u, v) = road.endpoints(s);
                crate::geo::project_onto_segment(
                    &frame,
                    &p,
                    &road.intersections[u as usize].location,
                    &road.intersections[v as usize].location,
                )
                .distance_m
            };
            d(a).total_cmp(&d(b))
        })
        .expect("road has segments")
}

/// Location of a six-station-city station offset by a few meters, as a
/// query point near it.
pub fn near_station(id: &str) -> GeoPoint {
    let (_, e, n) = SIX_STATION_LAYOUT.iter().find(|(s, _, _)| *s == id).expect("known station");
    SIX_STATION_ANCHOR.offset_m(e + 15.0, n + 10.0)
}

/// A one-hop ride used by hand-built candidates.
pub fn ride_segment(line: u32, board: u32, alight: u32, mode: TransportMode) -> RouteSegment {
    RouteSegment {
        line,
        line_id: line.to_string(),
        line_name: line.to_string(),
        mode,
        board,
        alight,
        stops: vec![board, alight],
        distance_m: 1000.0,
        duration_s: 200.0,
        fare: 2.0,
    }
}

/// A candidate with the given totals; walking is all at the start.
pub fn candidate(sig: u64, segments: Vec<RouteSegment>, eta: f64, dist: f64, walk: f64) -> RouteCandidate {
    RouteCandidate {
        n_transfers: segments.len().saturating_sub(1) as u32,
        segments,
        start_walk_m: walk,
        end_walk_m: 0.0,
        transfer_walks_m: vec![],
        transfer_walk_m: 0.0,
        on_transport_m: dist - walk,
        distance_m: dist,
        duration_s: eta,
        wait_s: 0.0,
        fare: 2.0,
        congestion: 0.0,
        provenance: Provenance::default(),
        signature: sig,
    }
}

/// `n` candidates spread over bus-only, metro-only and mixed routes.
pub fn synthetic_candidates(n: usize, seed: u64) -> Vec<RouteCandidate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let line = 100 + i as u32;
            let segs = match i % 3 {
                0 => vec![ride_segment(line, 1, 2, TransportMode::Bus)],
                1 => vec![ride_segment(line, 1, 3, TransportMode::Metro)],
                _ => vec![ride_segment(line, 1, 4, TransportMode::Metro), ride_segment(line + 1000, 4, 2, TransportMode::Bus)],
            };
            candidate(i as u64, segs, rng.gen_range(1200.0..2400.0), rng.gen_range(5000.0..8000.0), rng.gen_range(100.0..900.0))
        })
        .collect()
}

/// Two-way road from planar node positions (meters east/north of `anchor`)
/// and index pairs. Intersections are `u1, u2, …`, segments `e0, e1, …`.
pub fn planar_road(anchor: GeoPoint, nodes: &[(f64, f64)], links: &[(usize, usize)]) -> RoadNetwork {
    let intersections: Vec<Intersection> = nodes
        .iter()
        .enumerate()
        .map(|(i, (e, n))| Intersection { id: format!("u{}", i + 1), location: anchor.offset_m(*e, *n) })
        .collect();
    let segments = links
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| RoadSegment {
            id: format!("e{i}"),
            from: intersections[a].id.clone(),
            to: intersections[b].id.clone(),
            length_m: intersections[a].location.haversine_m(&intersections[b].location),
            bidirectional: true,
        })
        .collect();
    RoadNetwork::new(intersections, segments).expect("well-formed planar road")
}

/// Euclidean-vs-road counterexample: `p1` is nearer as the crow flies but
/// sits across a block that must be walked around; `p2` is reachable along
/// the street the query location is on.
pub struct DetourFixture {
    pub road: RoadNetwork,
    pub location: GeoPoint,
    /// `p1`, `p2`.
    pub stations: [GeoPoint; 2],
}

pub fn detour_fixture() -> DetourFixture {
    let anchor = GeoPoint::new(31.0, 121.0);
    let road = planar_road(
        anchor,
        &[(-300.0, 0.0), (300.0, 0.0), (-300.0, 150.0), (300.0, 150.0), (1000.0, 150.0), (1000.0, 0.0)],
        &[(0, 1), (1, 5), (5, 4), (4, 3), (3, 2)],
    );
    DetourFixture {
        road,
        location: anchor.offset_m(0.0, -5.0),
        stations: [anchor.offset_m(0.0, 140.0), anchor.offset_m(250.0, -60.0)],
    }
}
