//! Situational features for one route within its shortlist.
//!
//! Every vector is emitted by [`emit`], which is also run once in "schema
//! mode" to name the columns, so names and values cannot drift apart.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Datelike, Timelike};
use serde::{Deserialize, Serialize};

use crate::geo::{BoundingBox, GeoPoint, GridIndex};
use crate::model::{CityDataset, RouteSummary, TransportMode, Weather, WeatherRecord};
use crate::rank::ModeGroup;

/// Radius for regional POI, station and road statistics.
pub const REGION_RADIUS_M: f64 = 1000.0;
/// A location takes the categories of the nearest POI this close.
pub const POI_MATCH_RADIUS_M: f64 = 300.0;
/// Districts form a `DISTRICT_GRID` × `DISTRICT_GRID` partition of the city.
pub const DISTRICT_GRID: u32 = 4;
pub const MAX_CROSSES: usize = 64;

/// Default holiday table as (month, day), UTC.
pub const DEFAULT_HOLIDAYS: [(u32, u32); 12] =
    [(1, 1), (5, 1), (5, 2), (5, 3), (10, 1), (10, 2), (10, 3), (10, 4), (10, 5), (10, 6), (10, 7), (12, 25)];

pub const ROUTE_FEATURES: [&str; 12] = [
    "eta_s",
    "wait_s",
    "fare",
    "ticket_available",
    "distance_m",
    "congestion",
    "start_walk_m",
    "end_walk_m",
    "walk_m",
    "on_transport_m",
    "n_transfers",
    "speed_mps",
];

pub fn route_values(r: &RouteSummary) -> [f64; 12] {
    [
        r.eta_s,
        r.wait_s,
        r.fare,
        r.ticket_available as u8 as f64,
        r.distance_m,
        r.congestion,
        r.start_walk_m,
        r.end_walk_m,
        r.walk_m(),
        r.on_transport_m,
        r.n_transfers as f64,
        r.distance_m / r.eta_s.max(1.0),
    ]
}

/// Where and when a query happens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelContext {
    pub city: String,
    /// UTC seconds.
    pub timestamp: i64,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    pub weather: Option<WeatherRecord>,
}

/// Spatial lookups over one city's static data.
#[derive(Debug, Clone)]
pub struct CityProfile {
    pub city: String,
    bbox: BoundingBox,
    pois: Vec<(GeoPoint, String, String)>,
    poi_grid: GridIndex,
    /// Location and (bus-served, metro-served) flags of every station.
    stations: Vec<(GeoPoint, bool, bool)>,
    station_grid: GridIndex,
    intersections: Vec<GeoPoint>,
    intersection_grid: GridIndex,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Region {
    pub primary_category: Option<String>,
    pub secondary_category: Option<String>,
    pub district: u32,
    /// Share of nearby POIs per primary category.
    pub poi_share: BTreeMap<String, f64>,
    pub bus_stations: usize,
    pub metro_stations: usize,
    pub stations: usize,
    pub intersections: usize,
}

impl CityProfile {
    pub fn from_dataset(ds: &CityDataset) -> Self {
        let mut all: Vec<GeoPoint> = ds.stations.iter().map(|s| s.location).collect();
        all.extend(ds.road.intersections.iter().map(|n| n.location));
        let bbox = BoundingBox::of_points(all.iter())
            .unwrap_or(BoundingBox { min: GeoPoint::new(0.0, 0.0), max: GeoPoint::new(0.0, 0.0) });
        let anchor = bbox.min;
        let mut poi_grid = GridIndex::new(anchor, REGION_RADIUS_M);
        let pois: Vec<_> =
            ds.pois.iter().map(|p| (p.location, p.primary_category.clone(), p.secondary_category.clone())).collect();
        for (i, p) in pois.iter().enumerate() {
            poi_grid.insert(i as u32, &p.0);
        }
        let index = ds.station_index();
        let mut flags = vec![(false, false); ds.stations.len()];
        for l in &ds.lines {
            for s in &l.stops {
                let f = &mut flags[index[s.as_str()] as usize];
                match l.mode {
                    TransportMode::Metro | TransportMode::LightRail => f.1 = true,
                    _ => f.0 = true,
                }
            }
        }
        let stations: Vec<_> = ds.stations.iter().zip(flags).map(|(s, (b, m))| (s.location, b, m)).collect();
        let mut station_grid = GridIndex::new(anchor, REGION_RADIUS_M);
        for (i, s) in stations.iter().enumerate() {
            station_grid.insert(i as u32, &s.0);
        }
        let intersections: Vec<GeoPoint> = ds.road.intersections.iter().map(|n| n.location).collect();
        let mut intersection_grid = GridIndex::new(anchor, REGION_RADIUS_M);
        for (i, p) in intersections.iter().enumerate() {
            intersection_grid.insert(i as u32, p);
        }
        Self { city: ds.city.clone(), bbox, pois, poi_grid, stations, station_grid, intersections, intersection_grid }
    }

    pub fn district(&self, p: &GeoPoint) -> u32 {
        let span = |lo: f64, hi: f64, v: f64| {
            if hi > lo {
                (((v - lo) / (hi - lo) * DISTRICT_GRID as f64).floor() as i64).clamp(0, DISTRICT_GRID as i64 - 1) as u32
            } else {
                0
            }
        };
        span(self.bbox.min.lat, self.bbox.max.lat, p.lat) * DISTRICT_GRID + span(self.bbox.min.lon, self.bbox.max.lon, p.lon)
    }

    pub fn region(&self, p: &GeoPoint) -> Region {
        let near = |grid: &GridIndex, at: &dyn Fn(u32) -> GeoPoint, r: f64| -> Vec<(u32, f64)> {
            grid.query_radius(p, r).into_iter().map(|i| (i, p.haversine_m(&at(i)))).filter(|x| x.1 <= r).collect()
        };
        let pois = near(&self.poi_grid, &|i| self.pois[i as usize].0, REGION_RADIUS_M);
        let nearest = pois
            .iter()
            .filter(|x| x.1 <= POI_MATCH_RADIUS_M)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|x| &self.pois[x.0 as usize]);
        let mut poi_share: BTreeMap<String, f64> = BTreeMap::new();
        for (i, _) in &pois {
            *poi_share.entry(self.pois[*i as usize].1.clone()).or_default() += 1.0;
        }
        let total = pois.len().max(1) as f64;
        poi_share.values_mut().for_each(|v| *v /= total);
        let stations = near(&self.station_grid, &|i| self.stations[i as usize].0, REGION_RADIUS_M);
        Region {
            primary_category: nearest.map(|p| p.1.clone()),
            secondary_category: nearest.map(|p| p.2.clone()),
            district: self.district(p),
            poi_share,
            bus_stations: stations.iter().filter(|s| self.stations[s.0 as usize].1).count(),
            metro_stations: stations.iter().filter(|s| self.stations[s.0 as usize].2).count(),
            stations: stations.len(),
            intersections: near(&self.intersection_grid, &|i| self.intersections[i as usize], REGION_RADIUS_M).len(),
        }
    }

    pub fn categories(&self) -> (BTreeSet<String>, BTreeSet<String>) {
        (self.pois.iter().map(|p| p.1.clone()).collect(), self.pois.iter().map(|p| p.2.clone()).collect())
    }
}

/// Vocabularies fixed at training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub cities: Vec<String>,
    pub primary_categories: Vec<String>,
    pub secondary_categories: Vec<String>,
    pub holidays: Vec<(u32, u32)>,
    /// Selected cross features, e.g. `hour=8*bus_only`.
    pub crosses: Vec<String>,
}

/// Per-query inputs shared by every route of a shortlist.
#[derive(Debug, Clone)]
pub struct QueryFeatures {
    context: TravelContext,
    origin: Region,
    destination: Region,
    /// Per route feature: (min, max, avg) over the shortlist.
    stats: Vec<(f64, f64, f64)>,
}

fn cross_keys(hour: u32, group: ModeGroup, dest_primary: Option<&str>) -> [String; 2] {
    [format!("hour={hour}*{}", group.as_str()), format!("dpoi={}*{}", dest_primary.unwrap_or("unknown"), group.as_str())]
}

fn utc(ts: i64) -> DateTime<chrono::Utc> {
    DateTime::from_timestamp(ts, 0).unwrap_or_default()
}

impl QueryFeatures {
    pub fn new(context: &TravelContext, shortlist: &[RouteSummary], profile: Option<&CityProfile>) -> Self {
        let (origin, destination) = match profile {
            Some(p) => (p.region(&context.origin), p.region(&context.destination)),
            None => (Region::default(), Region::default()),
        };
        let stats = (0..ROUTE_FEATURES.len())
            .map(|f| {
                let vals: Vec<f64> = shortlist.iter().map(|r| route_values(r)[f]).collect();
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let avg = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
                if vals.is_empty() {
                    (0.0, 0.0, 0.0)
                } else {
                    (lo, hi, avg)
                }
            })
            .collect();
        Self { context: context.clone(), origin, destination, stats }
    }

    pub fn hour(&self) -> u32 {
        utc(self.context.timestamp).hour()
    }

    pub fn cross_keys(&self, route: &RouteSummary) -> [String; 2] {
        cross_keys(self.hour(), ModeGroup::of(&route.modes), self.destination.primary_category.as_deref())
    }
}

struct Sink {
    values: Vec<f64>,
    names: Option<Vec<String>>,
}

impl Sink {
    fn put(&mut self, name: impl FnOnce() -> String, v: f64) {
        if let Some(n) = &mut self.names {
            n.push(name());
        }
        self.values.push(v);
    }

    fn one_hot<T: PartialEq>(&mut self, prefix: &str, vocab: &[T], label: impl Fn(&T) -> String, value: Option<&T>) {
        for item in vocab {
            self.put(|| format!("{prefix}:{}", label(item)), (value == Some(item)) as u8 as f64);
        }
        self.put(|| format!("{prefix}:unknown"), value.is_none_or(|v| !vocab.contains(v)) as u8 as f64);
    }
}

fn emit(space: &FeatureSpace, q: &QueryFeatures, route: &RouteSummary, sink: &mut Sink) {
    let rv = route_values(route);
    // Route.
    for (name, v) in ROUTE_FEATURES.iter().zip(rv) {
        sink.put(|| name.to_string(), v);
    }
    let group = ModeGroup::of(&route.modes);
    sink.one_hot("mode_group", &ModeGroup::ALL, |g| g.as_str().to_string(), Some(&group));

    // Spatial.
    let city = space.cities.iter().position(|c| *c == q.context.city).map_or(-1.0, |i| i as f64);
    sink.put(|| "city".into(), city);
    sink.put(|| "origin_district".into(), q.origin.district as f64);
    sink.put(|| "dest_district".into(), q.destination.district as f64);
    for (side, r) in [("origin", &q.origin), ("dest", &q.destination)] {
        sink.one_hot(&format!("{side}_poi"), &space.primary_categories, |c| c.clone(), r.primary_category.as_ref());
        sink.one_hot(&format!("{side}_poi2"), &space.secondary_categories, |c| c.clone(), r.secondary_category.as_ref());
    }
    for (side, r) in [("origin", &q.origin), ("dest", &q.destination)] {
        for c in &space.primary_categories {
            sink.put(|| format!("{side}_poi_share:{c}"), r.poi_share.get(c).copied().unwrap_or(0.0));
        }
        sink.put(|| format!("{side}_bus_stations"), r.bus_stations as f64);
        sink.put(|| format!("{side}_metro_stations"), r.metro_stations as f64);
        sink.put(|| format!("{side}_road_density"), r.intersections as f64);
        sink.put(|| format!("{side}_station_density"), r.stations as f64);
    }

    // Temporal.
    let t = utc(q.context.timestamp);
    sink.put(|| "hour".into(), t.hour() as f64);
    sink.put(|| "minute".into(), t.minute() as f64);
    sink.put(|| "day_of_week".into(), t.weekday().num_days_from_monday() as f64);
    sink.put(|| "day_of_month".into(), t.day() as f64);
    sink.put(|| "holiday".into(), space.holidays.contains(&(t.month(), t.day())) as u8 as f64);
    sink.put(|| "in_service".into(), route.in_service as u8 as f64);

    // Meteorological.
    let w = q.context.weather.as_ref();
    sink.one_hot("weather", &Weather::ALL, |w| w.as_str().to_string(), w.map(|w| &w.weather));
    sink.put(|| "temperature_c".into(), w.map_or(0.0, |w| w.temperature_c));
    sink.put(|| "wind_level".into(), w.map_or(0.0, |w| w.wind_level as f64));
    let sectors: Vec<u8> = (0..16).collect();
    sink.one_hot("wind_dir", &sectors, |d| d.to_string(), w.map(|w| &w.wind_direction));
    sink.put(|| "aqi".into(), w.map_or(0.0, |w| w.aqi as f64));

    // Augmented: shortlist statistics and differences.
    for (f, name) in ROUTE_FEATURES.iter().enumerate() {
        let (lo, hi, avg) = q.stats[f];
        sink.put(|| format!("min_{name}"), lo);
        sink.put(|| format!("max_{name}"), hi);
        sink.put(|| format!("avg_{name}"), avg);
        sink.put(|| format!("{name}_minus_min"), rv[f] - lo);
        sink.put(|| format!("{name}_minus_max"), rv[f] - hi);
    }
    let keys = q.cross_keys(route);
    for c in &space.crosses {
        sink.put(|| format!("x:{c}"), keys.contains(c) as u8 as f64);
    }
}

impl FeatureSpace {
    /// Vocabularies from city profiles, crosses from the training shortlists
    /// (the `MAX_CROSSES` most frequent, ties by name).
    pub fn fit<'a>(
        profiles: &BTreeMap<String, CityProfile>,
        queries: impl IntoIterator<Item = (&'a QueryFeatures, &'a [RouteSummary])>,
    ) -> Self {
        let mut primary = BTreeSet::new();
        let mut secondary = BTreeSet::new();
        for p in profiles.values() {
            let (a, b) = p.categories();
            primary.extend(a);
            secondary.extend(b);
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for (q, routes) in queries {
            for r in routes {
                for k in q.cross_keys(r) {
                    *counts.entry(k).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(MAX_CROSSES);
        let mut crosses: Vec<String> = ranked.into_iter().map(|x| x.0).collect();
        crosses.sort();
        Self {
            cities: profiles.keys().cloned().collect(),
            primary_categories: primary.into_iter().collect(),
            secondary_categories: secondary.into_iter().collect(),
            holidays: DEFAULT_HOLIDAYS.to_vec(),
            crosses,
        }
    }

    pub fn names(&self) -> Vec<String> {
        let ctx = TravelContext {
            city: String::new(),
            timestamp: 0,
            origin: GeoPoint::new(0.0, 0.0),
            destination: GeoPoint::new(0.0, 0.0),
            weather: None,
        };
        let route = RouteSummary {
            eta_s: 0.0,
            wait_s: 0.0,
            fare: 0.0,
            ticket_available: false,
            in_service: false,
            distance_m: 0.0,
            congestion: 0.0,
            start_walk_m: 0.0,
            end_walk_m: 0.0,
            transfer_walk_m: 0.0,
            on_transport_m: 0.0,
            n_transfers: 0,
            modes: vec![],
            signature: 0,
        };
        let q = QueryFeatures::new(&ctx, std::slice::from_ref(&route), None);
        let mut sink = Sink { values: Vec::new(), names: Some(Vec::new()) };
        emit(self, &q, &route, &mut sink);
        sink.names.unwrap()
    }

    pub fn dimension(&self) -> usize {
        self.names().len()
    }

    /// Unscaled feature vector of `route` within its query.
    pub fn raw(&self, q: &QueryFeatures, route: &RouteSummary) -> Vec<f64> {
        let mut sink = Sink { values: Vec::with_capacity(256), names: None };
        emit(self, q, route, &mut sink);
        sink.values
    }
}

/// Min-max scaling into [0, 1] with statistics frozen at training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a Vec<f64>>, dim: usize) -> Self {
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for r in rows {
            for (j, v) in r.iter().enumerate() {
                min[j] = min[j].min(*v);
                max[j] = max[j].max(*v);
            }
        }
        for j in 0..dim {
            if !min[j].is_finite() {
                min[j] = 0.0;
                max[j] = 0.0;
            }
        }
        Self { min, max }
    }

    /// Scales in place; returns how many values had to be clamped.
    pub fn apply(&self, row: &mut [f64]) -> usize {
        let mut clamped = 0;
        for (j, v) in row.iter_mut().enumerate() {
            let (lo, hi) = (self.min[j], self.max[j]);
            let s = if hi > lo { (*v - lo) / (hi - lo) } else { 0.0 };
            if !(0.0..=1.0).contains(&s) {
                clamped += 1;
            }
            *v = s.clamp(0.0, 1.0);
        }
        clamped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::six_station_city;

    fn summary(eta: f64, modes: Vec<TransportMode>) -> RouteSummary {
        RouteSummary {
            eta_s: eta,
            wait_s: 100.0,
            fare: 2.0,
            ticket_available: true,
            in_service: true,
            distance_m: 3000.0,
            congestion: 0.2,
            start_walk_m: 100.0,
            end_walk_m: 50.0,
            transfer_walk_m: 0.0,
            on_transport_m: 2850.0,
            n_transfers: 0,
            modes,
            signature: eta as u64,
        }
    }

    fn setup() -> (FeatureSpace, TravelContext, CityProfile) {
        let ds = six_station_city();
        let profile = CityProfile::from_dataset(&ds);
        let ctx = TravelContext {
            city: "demo".into(),
            timestamp: 1_700_000_000,
            origin: crate::fixtures::near_station("p1"),
            destination: crate::fixtures::near_station("p6"),
            weather: ds.weather.first().cloned(),
        };
        let profiles: BTreeMap<String, CityProfile> = [("demo".to_string(), profile.clone())].into_iter().collect();
        let space = FeatureSpace::fit(&profiles, std::iter::empty());
        (space, ctx, profile)
    }

    fn value(space: &FeatureSpace, v: &[f64], name: &str) -> f64 {
        v[space.names().iter().position(|n| n == name).unwrap_or_else(|| panic!("no feature {name}"))]
    }

    #[test]
    fn augmented_statistics_are_hand_checkable() {
        let (space, ctx, profile) = setup();
        let list = vec![
            summary(1800.0, vec![TransportMode::Bus]),
            summary(2400.0, vec![TransportMode::Metro]),
            summary(3000.0, vec![TransportMode::Bus]),
        ];
        let q = QueryFeatures::new(&ctx, &list, Some(&profile));
        let v = space.raw(&q, &list[0]);
        assert_eq!(v.len(), space.dimension());
        assert_eq!(value(&space, &v, "avg_eta_s"), 2400.0);
        assert_eq!(value(&space, &v, "eta_s_minus_min"), 0.0);
        assert_eq!(value(&space, &v, "max_eta_s"), 3000.0);
        let w = space.raw(&q, &list[2]);
        assert_eq!(value(&space, &w, "eta_s_minus_min"), 1200.0);
    }

    #[test]
    fn single_route_shortlist_has_flat_statistics() {
        let (space, ctx, profile) = setup();
        let list = vec![summary(1500.0, vec![TransportMode::Bus])];
        let q = QueryFeatures::new(&ctx, &list, Some(&profile));
        let v = space.raw(&q, &list[0]);
        for name in ROUTE_FEATURES {
            let x = value(&space, &v, name);
            assert_eq!(value(&space, &v, &format!("{name}_minus_min")), 0.0);
            assert_eq!(value(&space, &v, &format!("min_{name}")), x);
            assert_eq!(value(&space, &v, &format!("max_{name}")), x);
            assert_eq!(value(&space, &v, &format!("avg_{name}")), x);
        }
    }

    #[test]
    fn spatial_temporal_and_weather_features() {
        let (space, ctx, profile) = setup();
        let list = vec![summary(1500.0, vec![TransportMode::Metro])];
        let q = QueryFeatures::new(&ctx, &list, Some(&profile));
        let v = space.raw(&q, &list[0]);
        // 1_700_000_000 is 2023-11-14 22:13:20 UTC, a Tuesday.
        assert_eq!(value(&space, &v, "hour"), 22.0);
        assert_eq!(value(&space, &v, "minute"), 13.0);
        assert_eq!(value(&space, &v, "day_of_week"), 1.0);
        assert_eq!(value(&space, &v, "day_of_month"), 14.0);
        assert_eq!(value(&space, &v, "holiday"), 0.0);
        assert_eq!(value(&space, &v, "weather:sunny"), 1.0);
        assert_eq!(value(&space, &v, "weather:unknown"), 0.0);
        assert_eq!(value(&space, &v, "origin_poi:business"), 1.0);
        assert_eq!(value(&space, &v, "dest_poi:shopping"), 1.0);
        assert_eq!(value(&space, &v, "mode_group:metro_only"), 1.0);
        assert_eq!(value(&space, &v, "city"), 0.0);
    }

    #[test]
    fn missing_weather_uses_unknown_bucket() {
        let (space, mut ctx, profile) = setup();
        ctx.weather = None;
        let list = vec![summary(1500.0, vec![TransportMode::Metro])];
        let v = space.raw(&QueryFeatures::new(&ctx, &list, Some(&profile)), &list[0]);
        assert_eq!(value(&space, &v, "weather:unknown"), 1.0);
        assert_eq!(value(&space, &v, "wind_dir:unknown"), 1.0);
    }

    #[test]
    fn scaler_maps_training_rows_into_unit_interval_and_clamps_others() {
        let rows = vec![vec![1.0, 5.0, 3.0], vec![3.0, 5.0, -1.0]];
        let s = Scaler::fit(rows.iter(), 3);
        for r in &rows {
            let mut r = r.clone();
            assert_eq!(s.apply(&mut r), 0);
            assert!(r.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let mut out = vec![4.0, 5.0, 3.0];
        assert_eq!(s.apply(&mut out), 1);
        assert_eq!(out, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn crosses_keep_the_most_frequent() {
        let (_, ctx, profile) = setup();
        let profiles: BTreeMap<String, CityProfile> = [("demo".to_string(), profile.clone())].into_iter().collect();
        let list = vec![summary(1500.0, vec![TransportMode::Metro]), summary(1600.0, vec![TransportMode::Bus])];
        let q = QueryFeatures::new(&ctx, &list, Some(&profile));
        let space = FeatureSpace::fit(&profiles, [(&q, list.as_slice())]);
        assert_eq!(
            space.crosses,
            ["dpoi=shopping*bus_only", "dpoi=shopping*metro_only", "hour=22*bus_only", "hour=22*metro_only"]
        );
        let v = space.raw(&q, &list[0]);
        assert_eq!(value(&space, &v, "x:hour=22*metro_only"), 1.0);
        assert_eq!(value(&space, &v, "x:hour=22*bus_only"), 0.0);
    }
}
