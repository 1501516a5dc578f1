//! Domain records for a city: stations, lines, the walkable road network,
//! POIs, weather snapshots, and the query/feedback log.

pub mod io;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geo::GeoPoint;

pub use io::{load_city_dataset, load_query_log, write_city_dataset, write_query_log, DatasetError, QueryLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalStation {
    pub id: String,
    pub location: GeoPoint,
    pub name: String,
    pub city: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportMode {
    Bus,
    Metro,
    Ferry,
    LightRail,
    Walk,
}

impl TransportMode {
    pub const TRANSIT: [TransportMode; 4] =
        [TransportMode::Bus, TransportMode::Metro, TransportMode::Ferry, TransportMode::LightRail];

    /// Whether vehicles of this mode share the road with general traffic.
    pub fn on_road(self) -> bool {
        matches!(self, TransportMode::Bus | TransportMode::LightRail)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TransportMode::Bus => "bus",
            TransportMode::Metro => "metro",
            TransportMode::Ferry => "ferry",
            TransportMode::LightRail => "light_rail",
            TransportMode::Walk => "walk",
        }
    }
}

impl fmt::Display for TransportMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A directed transit line. A real-world line running both ways is two records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportLine {
    pub id: String,
    #[serde(default)]
    pub name: String,
    pub mode: TransportMode,
    pub stops: Vec<String>,
    pub headway_s: f64,
    pub speed_mps: f64,
    pub fare: f64,
    /// `[start, end]` minute of day; `end < start` wraps past midnight.
    pub service_window: [u32; 2],
    /// Static congestion snapshot in `[0, 1]`; ignored for off-road modes.
    #[serde(default)]
    pub congestion: f64,
}

impl TransportLine {
    pub fn display_name(&self) -> &str {
        if self.name.is_empty() {
            &self.id
        } else {
            &self.name
        }
    }

    pub fn in_service(&self, minute_of_day: u32) -> bool {
        let [start, end] = self.service_window;
        if start <= end {
            (start..=end).contains(&minute_of_day)
        } else {
            minute_of_day >= start || minute_of_day <= end
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    pub id: String,
    pub location: GeoPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSegment {
    pub id: String,
    pub from: String,
    pub to: String,
    pub length_m: f64,
    #[serde(default = "default_true")]
    pub bidirectional: bool,
}

fn default_true() -> bool {
    true
}

/// Walkable road graph. Segment endpoints are resolved to intersection
/// indices when the dataset is validated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoadNetwork {
    pub intersections: Vec<Intersection>,
    pub segments: Vec<RoadSegment>,
    endpoints: Vec<(u32, u32)>,
}

impl RoadNetwork {
    pub fn new(intersections: Vec<Intersection>, segments: Vec<RoadSegment>) -> Result<Self, DatasetError> {
        let index: HashMap<&str, u32> = intersections.iter().enumerate().map(|(i, n)| (n.id.as_str(), i as u32)).collect();
        let mut endpoints = Vec::with_capacity(segments.len());
        for s in &segments {
            let from = *index.get(s.from.as_str()).ok_or_else(|| DatasetError::DanglingReference(s.from.clone()))?;
            let to = *index.get(s.to.as_str()).ok_or_else(|| DatasetError::DanglingReference(s.to.clone()))?;
            if !(s.length_m > 0.0) {
                return Err(DatasetError::invalid("road.jsonl", format!("segment {} has non-positive length", s.id)));
            }
            endpoints.push((from, to));
        }
        Ok(Self { intersections, segments, endpoints })
    }

    /// Intersection indices of segment `i`.
    pub fn endpoints(&self, segment: usize) -> (u32, u32) {
        self.endpoints[segment]
    }

    pub fn segment_index(&self) -> HashMap<&str, u32> {
        self.segments.iter().enumerate().map(|(i, s)| (s.id.as_str(), i as u32)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub id: String,
    pub location: GeoPoint,
    pub primary_category: String,
    #[serde(default)]
    pub secondary_category: String,
    pub projected_segment: String,
    pub walk_to_segment_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weather {
    Sunny,
    Rainy,
    Overcast,
    Cloudy,
    Foggy,
    Snow,
}

impl Weather {
    pub const ALL: [Weather; 6] =
        [Weather::Sunny, Weather::Rainy, Weather::Overcast, Weather::Cloudy, Weather::Foggy, Weather::Snow];

    pub fn parse(s: &str) -> Option<Weather> {
        Weather::ALL.into_iter().find(|w| w.as_str().eq_ignore_ascii_case(s))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Weather::Sunny => "sunny",
            Weather::Rainy => "rainy",
            Weather::Overcast => "overcast",
            Weather::Cloudy => "cloudy",
            Weather::Foggy => "foggy",
            Weather::Snow => "snow",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub timestamp: i64,
    pub weather: Weather,
    pub temperature_c: f64,
    /// Beaufort-style level, 0..=12.
    pub wind_level: u8,
    /// Compass sector, 0..16 (0 = north, clockwise).
    pub wind_direction: u8,
    pub aqi: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    Favorite,
    Share,
    Screenshot,
    Navigation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub route_id: String,
    pub kind: FeedbackKind,
    pub timestamp: i64,
}

/// Route attributes as shown to the user, enough to rebuild ranking
/// features offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteSummary {
    pub eta_s: f64,
    pub wait_s: f64,
    pub fare: f64,
    pub ticket_available: bool,
    pub in_service: bool,
    pub distance_m: f64,
    pub congestion: f64,
    pub start_walk_m: f64,
    pub end_walk_m: f64,
    pub transfer_walk_m: f64,
    pub on_transport_m: f64,
    pub n_transfers: u32,
    pub modes: Vec<TransportMode>,
    pub signature: u64,
}

impl RouteSummary {
    pub fn walk_m(&self) -> f64 {
        self.start_walk_m + self.end_walk_m + self.transfer_walk_m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresentedRoute {
    pub route_id: String,
    pub summary: RouteSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryLogEntry {
    pub query_id: String,
    #[serde(default)]
    pub city: String,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    pub timestamp: i64,
    #[serde(default)]
    pub weather: Option<WeatherRecord>,
    pub presented_routes: Vec<PresentedRoute>,
    #[serde(default)]
    pub feedback: Vec<Feedback>,
}

impl QueryLogEntry {
    /// Earliest feedback timestamp per presented route (`None` when the
    /// route received no feedback), in presentation order.
    pub fn first_feedback(&self) -> Vec<Option<i64>> {
        self.presented_routes
            .iter()
            .map(|r| self.feedback.iter().filter(|f| f.route_id == r.route_id).map(|f| f.timestamp).min())
            .collect()
    }
}

/// One city's validated static data.
#[derive(Debug, Clone, PartialEq)]
pub struct CityDataset {
    pub city: String,
    pub stations: Vec<PhysicalStation>,
    pub lines: Vec<TransportLine>,
    pub road: RoadNetwork,
    pub pois: Vec<Poi>,
    pub weather: Vec<WeatherRecord>,
}

impl CityDataset {
    /// Validates cross-references and field invariants.
    pub fn new(
        city: impl Into<String>,
        stations: Vec<PhysicalStation>,
        lines: Vec<TransportLine>,
        road: RoadNetwork,
        pois: Vec<Poi>,
        mut weather: Vec<WeatherRecord>,
    ) -> Result<Self, DatasetError> {
        let city = city.into();
        let mut ids = HashMap::new();
        for (i, s) in stations.iter().enumerate() {
            if !s.location.is_valid() {
                return Err(DatasetError::invalid("stations.jsonl", format!("station {} has invalid coordinates", s.id)));
            }
            if ids.insert(s.id.as_str(), i).is_some() {
                return Err(DatasetError::invalid("stations.jsonl", format!("duplicate station id {}", s.id)));
            }
        }
        for l in &lines {
            if l.mode == TransportMode::Walk {
                return Err(DatasetError::invalid("lines.jsonl", format!("line {} uses the walk mode", l.id)));
            }
            if l.stops.len() < 2 {
                return Err(DatasetError::invalid("lines.jsonl", format!("line {} has fewer than two stops", l.id)));
            }
            if !(l.headway_s > 0.0) || !(l.speed_mps > 0.0) || !(l.fare >= 0.0) {
                return Err(DatasetError::invalid("lines.jsonl", format!("line {} has non-positive headway or speed", l.id)));
            }
            if l.service_window.iter().any(|m| *m >= 24 * 60) {
                return Err(DatasetError::invalid("lines.jsonl", format!("line {} has a service window outside the day", l.id)));
            }
            let mut seen = std::collections::HashSet::new();
            for stop in &l.stops {
                if !ids.contains_key(stop.as_str()) {
                    return Err(DatasetError::DanglingReference(stop.clone()));
                }
                if !seen.insert(stop.as_str()) {
                    return Err(DatasetError::invalid("lines.jsonl", format!("line {} visits {} twice", l.id, stop)));
                }
            }
        }
        let segment_ids = road.segment_index();
        for p in &pois {
            if !segment_ids.contains_key(p.projected_segment.as_str()) {
                return Err(DatasetError::DanglingReference(p.projected_segment.clone()));
            }
            if !(p.walk_to_segment_m >= 0.0) {
                return Err(DatasetError::invalid("pois.jsonl", format!("poi {} has negative walk distance", p.id)));
            }
        }
        for w in &weather {
            if w.wind_level > 12 || w.wind_direction >= 16 {
                return Err(DatasetError::invalid("weather.jsonl", format!("weather record at {} out of range", w.timestamp)));
            }
        }
        weather.sort_by_key(|w| w.timestamp);
        Ok(Self { city, stations, lines, road, pois, weather })
    }

    pub fn station_index(&self) -> HashMap<&str, u32> {
        self.stations.iter().enumerate().map(|(i, s)| (s.id.as_str(), i as u32)).collect()
    }

    /// Most recent weather record at or before `timestamp`, within six hours.
    pub fn weather_at(&self, timestamp: i64) -> Option<&WeatherRecord> {
        let idx = self.weather.partition_point(|w| w.timestamp <= timestamp);
        let rec = self.weather.get(idx.checked_sub(1)?)?;
        (timestamp - rec.timestamp <= 6 * 3600).then_some(rec)
    }
}
