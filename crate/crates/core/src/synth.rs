//! Seeded synthetic cities: a road grid, stations scattered along it, bus
//! and metro lines threaded through nearby stations, POIs and hourly weather.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geo::{GeoPoint, GridIndex, LocalFrame};
use crate::model::{
    CityDataset, Intersection, PhysicalStation, Poi, RoadNetwork, RoadSegment, TransportLine, TransportMode, Weather,
    WeatherRecord,
};

/// Builds a `rows` x `cols` grid of intersections `spacing_m` apart with
/// bidirectional segments between 4-neighbours. Ids are `{prefix}{row}_{col}`.
pub fn grid_road(south_west: GeoPoint, rows: usize, cols: usize, spacing_m: f64, prefix: &str) -> RoadNetwork {
    let mut intersections = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            intersections.push(Intersection {
                id: format!("{prefix}{r}_{c}"),
                location: south_west.offset_m(c as f64 * spacing_m, r as f64 * spacing_m),
            });
        }
    }
    let mut segments = Vec::new();
    let mut link = |a: usize, b: usize| {
        let len = intersections[a].location.haversine_m(&intersections[b].location);
        segments.push(RoadSegment {
            id: format!("s{}", segments.len()),
            from: intersections[a].id.clone(),
            to: intersections[b].id.clone(),
            length_m: len,
            bidirectional: true,
        });
    };
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                link(i, i + 1);
            }
            if r + 1 < rows {
                link(i, i + cols);
            }
        }
    }
    RoadNetwork::new(intersections, segments).expect("grid road is consistent")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCityParams {
    pub city: String,
    pub seed: u64,
    pub anchor: GeoPoint,
    pub rows: usize,
    pub cols: usize,
    pub spacing_m: f64,
    pub n_stations: usize,
    /// Number of bus routes; each yields two directed lines.
    pub bus_routes: usize,
    /// Number of metro routes; each yields two directed lines.
    pub metro_routes: usize,
    pub bus_stops: usize,
    pub metro_stops: usize,
    pub n_pois: usize,
    pub weather_days: u32,
    /// First weather record timestamp.
    pub epoch: i64,
}

impl Default for SyntheticCityParams {
    fn default() -> Self {
        Self {
            city: "synth".into(),
            seed: 7,
            anchor: GeoPoint::new(30.0, 120.0),
            rows: 40,
            cols: 40,
            spacing_m: 250.0,
            n_stations: 600,
            bus_routes: 24,
            metro_routes: 3,
            bus_stops: 18,
            metro_stops: 12,
            n_pois: 400,
            weather_days: 120,
            epoch: 1_704_067_200,
        }
    }
}

impl SyntheticCityParams {
    /// The latency-benchmark city: 5,000 stations and 300 directed lines.
    pub fn large() -> Self {
        Self {
            rows: 100,
            cols: 100,
            spacing_m: 200.0,
            n_stations: 5_000,
            bus_routes: 140,
            metro_routes: 10,
            bus_stops: 30,
            metro_stops: 20,
            n_pois: 3_000,
            ..Self::default()
        }
    }

    pub fn extent_m(&self) -> (f64, f64) {
        ((self.cols - 1) as f64 * self.spacing_m, (self.rows - 1) as f64 * self.spacing_m)
    }
}

pub const POI_CATEGORIES: [(&str, [&str; 2]); 6] = [
    ("residential", ["apartment", "villa"]),
    ("business", ["office", "bank"]),
    ("shopping", ["mall", "market"]),
    ("education", ["school", "university"]),
    ("hospital", ["clinic", "general"]),
    ("leisure", ["park", "stadium"]),
];

/// Point at fraction `t` along segment `seg`, pushed `side_m` meters to its left.
fn beside_segment(frame: &LocalFrame, road: &RoadNetwork, seg: usize, t: f64, side_m: f64) -> GeoPoint {
    let (a, b) = road.endpoints(seg);
    let pa = road.intersections[a as usize].location;
    let pb = road.intersections[b as usize].location;
    let (ax, ay) = frame.to_xy(&pa);
    let (bx, by) = frame.to_xy(&pb);
    let (dx, dy) = (bx - ax, by - ay);
    let len = (dx * dx + dy * dy).sqrt().max(1e-9);
    let (nx, ny) = (-dy / len, dx / len);
    frame.origin.offset_m(ax + t * dx + side_m * nx, ay + t * dy + side_m * ny)
}

pub fn synthetic_city(p: &SyntheticCityParams) -> CityDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let road = grid_road(p.anchor, p.rows, p.cols, p.spacing_m, "u");
    let frame = LocalFrame::new(p.anchor);

    let stations: Vec<PhysicalStation> = (0..p.n_stations)
        .map(|i| {
            let seg = rng.gen_range(0..road.segments.len());
            let t = rng.gen_range(0.1..0.9);
            let side = rng.gen_range(5.0..40.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            PhysicalStation {
                id: format!("st{i}"),
                location: beside_segment(&frame, &road, seg, t, side),
                name: format!("Stop {i}"),
                city: p.city.clone(),
            }
        })
        .collect();

    let mut grid = GridIndex::new(p.anchor, 500.0);
    let xy: Vec<(f64, f64)> = stations.iter().map(|s| frame.to_xy(&s.location)).collect();
    for (i, s) in stations.iter().enumerate() {
        grid.insert(i as u32, &s.location);
    }

    let mut lines = Vec::new();
    let mut thread = |rng: &mut ChaCha8Rng, mode: TransportMode, n_stops: usize, hop: (f64, f64), idx: usize| {
        for _attempt in 0..20 {
            let start = rng.gen_range(0..stations.len());
            let mut heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let mut route = vec![start];
            while route.len() < n_stops {
                let cur = *route.last().unwrap();
                let near = grid.query_radius(&stations[cur].location, hop.1);
                let (cx, cy) = xy[cur];
                let best = near
                    .iter()
                    .map(|&j| j as usize)
                    .filter(|j| !route.contains(j))
                    .filter_map(|j| {
                        let (dx, dy) = (xy[j].0 - cx, xy[j].1 - cy);
                        let d = (dx * dx + dy * dy).sqrt();
                        if d < hop.0 || d > hop.1 {
                            return None;
                        }
                        let mut off = (dy.atan2(dx) - heading).rem_euclid(std::f64::consts::TAU);
                        if off > std::f64::consts::PI {
                            off = std::f64::consts::TAU - off;
                        }
                        (off < 0.8).then_some((j, off * 1000.0 + (d - hop.0) * 0.5))
                    })
                    .min_by(|a, b| a.1.total_cmp(&b.1));
                match best {
                    Some((j, _)) => {
                        let (dx, dy) = (xy[j].0 - cx, xy[j].1 - cy);
                        let turn = (dy.atan2(dx) - heading + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU)
                            - std::f64::consts::PI;
                        heading += 0.3 * turn + rng.gen_range(-0.15..0.15);
                        route.push(j);
                    }
                    None => break,
                }
            }
            if route.len() * 2 < n_stops {
                continue;
            }
            let (tag, headway, speed, fare, congestion) = match mode {
                TransportMode::Metro => ("M", rng.gen_range(180.0..360.0), 11.0, 4.0, 0.0),
                _ => ("B", rng.gen_range(300.0..900.0), 6.0, 2.0, rng.gen_range(0.1..0.8)),
            };
            let window = if mode == TransportMode::Bus && rng.gen_bool(0.1) { [1320, 300] } else { [330, 1410] };
            for (dir, stops) in [("a", route.clone()), ("b", route.iter().rev().copied().collect())] {
                lines.push(TransportLine {
                    id: format!("{tag}{idx}{dir}"),
                    name: format!("{tag}{idx}"),
                    mode,
                    stops: stops.iter().map(|&s| stations[s].id.clone()).collect(),
                    headway_s: headway,
                    speed_mps: speed,
                    fare,
                    service_window: window,
                    congestion,
                });
            }
            return;
        }
    };
    for i in 0..p.metro_routes {
        thread(&mut rng, TransportMode::Metro, p.metro_stops, (900.0, 1800.0), i);
    }
    for i in 0..p.bus_routes {
        thread(&mut rng, TransportMode::Bus, p.bus_stops, (300.0, 800.0), i);
    }

    let pois = (0..p.n_pois)
        .map(|i| {
            let seg = rng.gen_range(0..road.segments.len());
            let side = rng.gen_range(5.0..60.0);
            let (cat, subs) = POI_CATEGORIES.choose(&mut rng).unwrap();
            Poi {
                id: format!("poi{i}"),
                location: beside_segment(&frame, &road, seg, rng.gen_range(0.0..1.0), side),
                primary_category: cat.to_string(),
                secondary_category: subs.choose(&mut rng).unwrap().to_string(),
                projected_segment: road.segments[seg].id.clone(),
                walk_to_segment_m: side,
            }
        })
        .collect();

    let mut weather = Vec::new();
    let mut current = Weather::Sunny;
    for h in 0..(p.weather_days as i64 * 24) {
        if rng.gen_bool(0.08) {
            current = *Weather::ALL.choose(&mut rng).unwrap();
        }
        weather.push(WeatherRecord {
            timestamp: p.epoch + h * 3600,
            weather: current,
            temperature_c: 15.0 + 10.0 * ((h % 24) as f64 / 24.0 * std::f64::consts::TAU).sin() + rng.gen_range(-3.0..3.0),
            wind_level: rng.gen_range(0..7),
            wind_direction: rng.gen_range(0..16),
            aqi: rng.gen_range(20..180),
        });
    }

    CityDataset::new(p.city.clone(), stations, lines, road, pois, weather).expect("synthetic city is valid")
}
