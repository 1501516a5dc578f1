//! The online pipeline: bind → generate → primary rank → features → rerank.
//!
//! All state is immutable after construction; handlers take `&Engine`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binder::io::{load_cache_set, CacheSet};
use crate::binder::{bind, build_city_cache, BindStatus, BinderConfig, BoundStation};
use crate::codec::CodecError;
use crate::geo::{BoundingBox, GeoPoint};
use crate::model::io::{load_datasets, DatasetError};
use crate::model::{CityDataset, RouteSummary, TransportMode, Weather, WeatherRecord};
use crate::ptg::io::load_ptg;
use crate::ptg::{compile_ptg, dataset_hash, CityGraph, Ptg, PtgError, WeightConfig};
use crate::rank::{primary_rank, CostWeights, FilterRules, ShortlistRange};
use crate::rerank::io::load_model;
use crate::rerank::{CityProfile, RankModel, RerankError, TravelContext};
use crate::search::{generate_candidates, CandidateStatus, RouteCandidate, SearchError, SearchLimits};

/// Queries closer than this are "from here to here".
pub const DEGENERATE_M: f64 = 1.0;

/// Knobs of the online pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSettings {
    pub limits: SearchLimits,
    pub filter: FilterRules,
    pub weights: CostWeights,
    pub shortlist: ShortlistRange,
    /// Stations bound per endpoint.
    pub bind_k: usize,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            limits: SearchLimits::default(),
            filter: FilterRules::default(),
            weights: CostWeights::default(),
            shortlist: ShortlistRange::default(),
            bind_k: 3,
        }
    }
}

/// `engine.toml`. Relative paths resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub ptg: PathBuf,
    pub cache: PathBuf,
    #[serde(default)]
    pub model: Option<PathBuf>,
    pub data: PathBuf,
    #[serde(default = "default_listen")]
    pub listen: String,
    #[serde(default = "default_timeout")]
    pub request_timeout_ms: u64,
    /// Directory served under `/`.
    #[serde(default)]
    pub static_dir: Option<PathBuf>,
    #[serde(default)]
    pub pipeline: PipelineSettings,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_timeout() -> u64 {
    2000
}

impl EngineConfig {
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.ptg);
        fix(&mut self.cache);
        fix(&mut self.data);
        if let Some(m) = &mut self.model {
            fix(m);
        }
        if let Some(s) = &mut self.static_dir {
            fix(s);
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("loading {path}: {source}")]
    Artifact { path: PathBuf, source: CodecError },
    #[error("loading model {path}: {source}")]
    Model { path: PathBuf, source: RerankError },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Compile(#[from] PtgError),
    #[error("city {0} is missing from the {1}")]
    MissingCity(String, &'static str),
    #[error("{0} was built from different data than the loaded datasets")]
    Stale(&'static str),
}

/// A route request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteQuery {
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    /// Departure, UTC seconds.
    pub depart_ts: i64,
    #[serde(default)]
    pub weather: Option<Weather>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error("invalid coordinates: {0}")]
    InvalidCoordinates(String),
    #[error("origin and destination coincide")]
    Degenerate,
    #[error("no station within walking range of the {0}")]
    NoStationInRange(&'static str),
    #[error("no transit route connects origin and destination")]
    Unreachable,
    #[error("origin and destination share their nearest stations; walk instead")]
    WalkOnly,
    #[error("internal error: {0}")]
    Internal(String),
}

impl QueryError {
    pub fn http_status(&self) -> u16 {
        match self {
            QueryError::InvalidCoordinates(_) => 400,
            QueryError::Internal(_) => 500,
            _ => 404,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            QueryError::InvalidCoordinates(_) => "invalid_coordinates",
            QueryError::Degenerate => "degenerate_query",
            QueryError::NoStationInRange(_) => "no_station_in_range",
            QueryError::Unreachable => "unreachable",
            QueryError::WalkOnly => "walk_only",
            QueryError::Internal(_) => "internal",
        }
    }
}

/// Wall-clock time per pipeline phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub bind: Duration,
    /// Inside `generate_candidates` only.
    pub routing: Duration,
    pub primary: Duration,
    /// Feature construction plus model scoring.
    pub rerank: Duration,
}

impl PhaseTimings {
    pub fn ranking(&self) -> Duration {
        self.primary + self.rerank
    }

    pub fn total(&self) -> Duration {
        self.bind + self.routing + self.ranking()
    }
}

/// Everything up to and including primary ranking.
#[derive(Debug, Clone)]
pub struct Plan {
    pub city: String,
    pub context: TravelContext,
    /// The shortlist, in primary order.
    pub routes: Vec<RouteCandidate>,
    pub summaries: Vec<RouteSummary>,
    pub primary_costs: Vec<f64>,
    pub status: CandidateStatus,
    pub candidates_generated: usize,
    pub timings: PhaseTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentView {
    pub line_id: String,
    pub line_name: String,
    pub mode: TransportMode,
    pub board_station: String,
    pub board_name: String,
    pub alight_station: String,
    pub alight_name: String,
    pub stops: usize,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteTotals {
    pub eta_s: f64,
    pub distance_m: f64,
    pub fare: f64,
    pub walk_m: f64,
    pub transfers: u32,
    pub wait_s: f64,
    pub congestion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRoute {
    /// 1-based.
    pub rank: usize,
    /// Reranker score; `None` when primary order is served.
    pub score: Option<f64>,
    pub primary_cost: f64,
    pub route_id: String,
    pub segments: Vec<SegmentView>,
    pub totals: RouteTotals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseFlags {
    /// Search stopped early; the list may be incomplete.
    pub partial: bool,
    pub time_budget_exceeded: bool,
    pub reranked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResponse {
    pub query: RouteQuery,
    pub city: String,
    pub routes: Vec<RankedRoute>,
    pub flags: ResponseFlags,
    /// `"rerank"` or `"primary"`.
    pub ordering: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationView {
    pub id: String,
    pub name: String,
    pub city: String,
    pub lat: f64,
    pub lon: f64,
    pub lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub schema_version: u32,
    pub trees: usize,
    pub features: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthReport {
    pub status: String,
    pub cities: Vec<String>,
    pub ptg_dataset_hash: String,
    pub ptg_built_at: i64,
    pub model: Option<ModelInfo>,
    pub rerank: String,
    pub uptime_s: u64,
}

pub struct Engine {
    pub ptg: Ptg,
    pub caches: CacheSet,
    pub datasets: BTreeMap<String, CityDataset>,
    pub profiles: BTreeMap<String, CityProfile>,
    pub model: Option<RankModel>,
    pub settings: PipelineSettings,
    /// Per city: station bounding box grown by the binding radius.
    coverage: Vec<(String, BoundingBox)>,
    started: Instant,
}

impl Engine {
    pub fn new(
        ptg: Ptg,
        caches: CacheSet,
        datasets: BTreeMap<String, CityDataset>,
        model: Option<RankModel>,
        settings: PipelineSettings,
    ) -> Result<Self, EngineError> {
        if ptg.meta.dataset_hash != dataset_hash(datasets.values()) {
            return Err(EngineError::Stale("the compiled graph"));
        }
        let mut coverage = Vec::new();
        for (id, g) in &ptg.cities {
            let cache = caches.cities.get(id).ok_or_else(|| EngineError::MissingCity(id.clone(), "station cache"))?;
            let ds = datasets.get(id).ok_or_else(|| EngineError::MissingCity(id.clone(), "datasets"))?;
            if ds.stations.len() != g.physical.stations.len() {
                return Err(EngineError::Stale("the compiled graph"));
            }
            if cache.road_fingerprint != (ds.road.intersections.len() as u64, ds.road.segments.len() as u64) {
                return Err(EngineError::Stale("the station cache"));
            }
            let reach = cache.config.lambda_m + cache.config.projection_radius_m;
            if let Some(b) = BoundingBox::of_points(g.physical.stations.iter().map(|s| &s.location)) {
                coverage.push((id.clone(), b.expand_m(reach)));
            }
        }
        let profiles = datasets.iter().map(|(k, d)| (k.clone(), CityProfile::from_dataset(d))).collect();
        Ok(Self { ptg, caches, datasets, profiles, model, settings, coverage, started: Instant::now() })
    }

    /// Compiles graphs and caches in memory.
    pub fn build(
        datasets: BTreeMap<String, CityDataset>,
        weights: &WeightConfig,
        binder: &BinderConfig,
        model: Option<RankModel>,
        settings: PipelineSettings,
    ) -> Result<Self, EngineError> {
        let ptg = compile_ptg(&datasets, weights)?;
        let caches = CacheSet {
            cities: ptg
                .cities
                .iter()
                .map(|(id, g)| (id.clone(), build_city_cache(g, &datasets[id].road, &datasets[id].pois, binder)))
                .collect(),
        };
        Self::new(ptg, caches, datasets, model, settings)
    }

    /// Loads the artifacts named by `cfg` from disk.
    pub fn load(cfg: &EngineConfig) -> Result<Self, EngineError> {
        let art = |path: &Path, source| EngineError::Artifact { path: path.to_path_buf(), source };
        let ptg = load_ptg(&cfg.ptg).map_err(|e| art(&cfg.ptg, e))?;
        let caches = load_cache_set(&cfg.cache).map_err(|e| art(&cfg.cache, e))?;
        let datasets = load_datasets(&cfg.data)?;
        let model = match &cfg.model {
            Some(p) => Some(load_model(p).map_err(|source| EngineError::Model { path: p.clone(), source })?),
            None => None,
        };
        Self::new(ptg, caches, datasets, model, cfg.pipeline.clone())
    }

    pub fn city_of(&self, p: &GeoPoint) -> Option<&str> {
        self.coverage.iter().find(|(_, b)| b.contains(p)).map(|(id, _)| id.as_str())
    }

    fn bind_side(&self, city: &str, p: &GeoPoint, side: &'static str) -> Result<Vec<BoundStation>, QueryError> {
        let ds = &self.datasets[city];
        let b = bind(p, &self.caches.cities[city], &ds.road, &ds.pois, self.settings.bind_k.max(1));
        match b.status {
            BindStatus::Ok => Ok(b.stations),
            BindStatus::NoStationInRange => Err(QueryError::NoStationInRange(side)),
        }
    }

    pub fn context(&self, city: &str, q: &RouteQuery) -> TravelContext {
        let recorded = self.datasets.get(city).and_then(|d| d.weather_at(q.depart_ts)).cloned();
        let weather = match (q.weather, recorded) {
            (Some(w), Some(r)) => Some(WeatherRecord { weather: w, ..r }),
            (Some(w), None) => Some(WeatherRecord {
                timestamp: q.depart_ts,
                weather: w,
                temperature_c: 0.0,
                wind_level: 0,
                wind_direction: 0,
                aqi: 0,
            }),
            (None, r) => r,
        };
        TravelContext { city: city.to_string(), timestamp: q.depart_ts, origin: q.origin, destination: q.destination, weather }
    }

    /// Bind, generate and primary-rank with the engine's limits.
    pub fn plan(&self, q: &RouteQuery) -> Result<Plan, QueryError> {
        self.plan_with(q, &self.settings.limits)
    }

    pub fn plan_with(&self, q: &RouteQuery, limits: &SearchLimits) -> Result<Plan, QueryError> {
        for (name, p) in [("origin", &q.origin), ("destination", &q.destination)] {
            if !p.is_valid() {
                return Err(QueryError::InvalidCoordinates(format!("{name} {},{}", p.lat, p.lon)));
            }
        }
        if q.origin.haversine_m(&q.destination) < DEGENERATE_M {
            return Err(QueryError::Degenerate);
        }
        let city = self.city_of(&q.origin).ok_or(QueryError::NoStationInRange("origin"))?.to_string();
        if self.city_of(&q.destination) != Some(city.as_str()) {
            return Err(QueryError::NoStationInRange("destination"));
        }
        let graph: &CityGraph = &self.ptg.cities[&city];
        let mut timings = PhaseTimings::default();

        let t = Instant::now();
        let origins = self.bind_side(&city, &q.origin, "origin")?;
        let dests = self.bind_side(&city, &q.destination, "destination")?;
        timings.bind = t.elapsed();

        let t = Instant::now();
        let set = generate_candidates(graph, &self.ptg.meta.config, &origins, &dests, limits).map_err(|e| match e {
            SearchError::NoEndpoints => QueryError::Unreachable,
            e => QueryError::Internal(e.to_string()),
        })?;
        timings.routing = t.elapsed();
        match set.status {
            CandidateStatus::WalkOnly => return Err(QueryError::WalkOnly),
            CandidateStatus::Unreachable => return Err(QueryError::Unreachable),
            _ if set.candidates.is_empty() => return Err(QueryError::Unreachable),
            _ => {}
        }

        let t = Instant::now();
        let s = &self.settings;
        let shortlist = primary_rank(&set.candidates, &s.filter, &s.weights, s.shortlist);
        let routes: Vec<RouteCandidate> = shortlist.entries.iter().map(|e| set.candidates[e.index].clone()).collect();
        let summaries = routes.iter().map(|r| r.summary(graph, &self.ptg.meta.config, q.depart_ts)).collect();
        timings.primary = t.elapsed();

        Ok(Plan {
            context: self.context(&city, q),
            city,
            routes,
            summaries,
            primary_costs: shortlist.entries.iter().map(|e| e.cost).collect(),
            status: set.status,
            candidates_generated: set.candidates.len(),
            timings,
        })
    }

    /// Final order of a plan's shortlist and per-route scores; primary order
    /// without a model.
    pub fn order(&self, plan: &mut Plan) -> Result<(Vec<usize>, Option<Vec<f64>>), QueryError> {
        let Some(model) = &self.model else {
            return Ok(((0..plan.routes.len()).collect(), None));
        };
        let t = Instant::now();
        let out = model
            .rerank(&plan.context, &plan.summaries, self.profiles.get(&plan.city))
            .map_err(|e| QueryError::Internal(e.to_string()))?;
        plan.timings.rerank = t.elapsed();
        Ok((out.order, Some(out.scores)))
    }

    pub fn handle_route_query(&self, q: &RouteQuery) -> Result<(RouteResponse, PhaseTimings), QueryError> {
        let mut plan = self.plan(q)?;
        let (order, scores) = self.order(&mut plan)?;
        let graph = &self.ptg.cities[&plan.city];
        let station = |i: u32| &graph.physical.stations[i as usize];
        let routes = order
            .iter()
            .enumerate()
            .map(|(rank, &i)| {
                let r = &plan.routes[i];
                let s = &plan.summaries[i];
                RankedRoute {
                    rank: rank + 1,
                    score: scores.as_ref().map(|v| v[i]),
                    primary_cost: plan.primary_costs[i],
                    route_id: format!("{:016x}", r.signature),
                    segments: r
                        .segments
                        .iter()
                        .map(|seg| SegmentView {
                            line_id: seg.line_id.clone(),
                            line_name: seg.line_name.clone(),
                            mode: seg.mode,
                            board_station: station(seg.board).id.clone(),
                            board_name: station(seg.board).name.clone(),
                            alight_station: station(seg.alight).id.clone(),
                            alight_name: station(seg.alight).name.clone(),
                            stops: seg.stops.len() - 1,
                            duration_s: seg.duration_s,
                        })
                        .collect(),
                    totals: RouteTotals {
                        eta_s: s.eta_s,
                        distance_m: s.distance_m,
                        fare: s.fare,
                        walk_m: s.walk_m(),
                        transfers: s.n_transfers,
                        wait_s: s.wait_s,
                        congestion: s.congestion,
                    },
                }
            })
            .collect();
        let over = plan.status == CandidateStatus::TimeBudgetExceeded;
        let response = RouteResponse {
            query: q.clone(),
            city: plan.city.clone(),
            routes,
            flags: ResponseFlags { partial: over, time_budget_exceeded: over, reranked: scores.is_some() },
            ordering: if scores.is_some() { "rerank" } else { "primary" }.into(),
        };
        Ok((response, plan.timings))
    }

    /// Stations inside `bbox`, by city then station order.
    pub fn handle_stations(&self, bbox: &BoundingBox) -> Result<Vec<StationView>, QueryError> {
        if !(bbox.min.is_valid() && bbox.max.is_valid()) || bbox.min.lat > bbox.max.lat || bbox.min.lon > bbox.max.lon {
            return Err(QueryError::InvalidCoordinates("bbox must be min_lat,min_lon,max_lat,max_lon".into()));
        }
        let mut out = Vec::new();
        for g in self.ptg.cities.values() {
            for (i, s) in g.physical.stations.iter().enumerate() {
                if bbox.contains(&s.location) {
                    out.push(StationView {
                        id: s.id.clone(),
                        name: s.name.clone(),
                        city: g.city.clone(),
                        lat: s.location.lat,
                        lon: s.location.lon,
                        lines: g.lines_at(i as u32).into_iter().map(|l| g.lines[l as usize].id.clone()).collect(),
                    });
                }
            }
        }
        Ok(out)
    }

    pub fn health(&self) -> HealthReport {
        HealthReport {
            status: "ok".into(),
            cities: self.ptg.cities.keys().cloned().collect(),
            ptg_dataset_hash: format!("{:016x}", self.ptg.meta.dataset_hash),
            ptg_built_at: self.ptg.meta.built_at,
            model: self.model.as_ref().map(|m| ModelInfo {
                schema_version: m.schema_version,
                trees: m.ensemble.trees.len(),
                features: m.names.len(),
            }),
            rerank: if self.model.is_some() { "enabled" } else { "disabled, primary order served" }.into(),
            uptime_s: self.started.elapsed().as_secs(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{near_station, six_station_city, SIX_STATION_ANCHOR};

    fn engine() -> Engine {
        let ds = six_station_city();
        let datasets = [(ds.city.clone(), ds)].into_iter().collect();
        let settings = PipelineSettings { limits: SearchLimits::default().unbounded_time(), ..PipelineSettings::default() };
        Engine::build(datasets, &WeightConfig::default(), &BinderConfig::default(), None, settings).unwrap()
    }

    fn query(o: GeoPoint, d: GeoPoint) -> RouteQuery {
        RouteQuery { origin: o, destination: d, depart_ts: 1_700_035_200, weather: None }
    }

    #[test]
    fn worked_example_yields_three_ranked_routes() {
        let e = engine();
        let (r, _) = e.handle_route_query(&query(near_station("p1"), near_station("p6"))).unwrap();
        assert_eq!(r.city, "demo");
        assert_eq!(r.routes.len(), 3);
        assert_eq!(r.routes.iter().map(|x| x.rank).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(r.ordering, "primary");
        assert!(!r.flags.reranked);
        let top = &r.routes[0];
        assert!(!top.segments.is_empty());
        assert_eq!(top.segments[0].board_station, "p1");
        assert_eq!(top.segments.last().unwrap().alight_station, "p6");
        assert_eq!(top.totals.transfers as usize, top.segments.len() - 1);
    }

    #[test]
    fn error_taxonomy() {
        let e = engine();
        let p = near_station("p1");
        assert_eq!(e.handle_route_query(&query(p, p)).unwrap_err(), QueryError::Degenerate);
        let bad = e.handle_route_query(&query(GeoPoint::new(95.0, 0.0), p)).unwrap_err();
        assert_eq!(bad.http_status(), 400);
        let far = SIX_STATION_ANCHOR.offset_m(0.0, 50_000.0);
        let err = e.handle_route_query(&query(p, far)).unwrap_err();
        assert_eq!(err, QueryError::NoStationInRange("destination"));
        assert_eq!(err.http_status(), 404);
        // p3 is a terminal of line 3 only; nothing leaves it.
        assert_eq!(e.handle_route_query(&query(near_station("p3"), near_station("p1"))).unwrap_err(), QueryError::Unreachable);
    }

    #[test]
    fn stations_by_bbox() {
        let e = engine();
        let all =
            BoundingBox { min: SIX_STATION_ANCHOR.offset_m(-100.0, -1000.0), max: SIX_STATION_ANCHOR.offset_m(6100.0, 2600.0) };
        let s = e.handle_stations(&all).unwrap();
        assert_eq!(s.len(), 6);
        assert_eq!(s.iter().find(|v| v.id == "p5").unwrap().lines, vec!["1", "2"]);
        let empty = BoundingBox { min: GeoPoint::new(10.0, 10.0), max: GeoPoint::new(10.1, 10.1) };
        assert!(e.handle_stations(&empty).unwrap().is_empty());
        let inverted = BoundingBox { min: all.max, max: all.min };
        assert_eq!(e.handle_stations(&inverted).unwrap_err().http_status(), 400);
    }

    #[test]
    fn health_reports_disabled_rerank() {
        let h = engine().health();
        assert_eq!(h.cities, vec!["demo"]);
        assert!(h.model.is_none());
        assert_eq!(h.rerank, "disabled, primary order served");
    }

    #[test]
    fn responses_are_deterministic() {
        let e = engine();
        let q = query(near_station("p1"), near_station("p6"));
        let a = serde_json::to_string(&e.handle_route_query(&q).unwrap().0).unwrap();
        let b = serde_json::to_string(&engine().handle_route_query(&q).unwrap().0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn weather_hint_overrides_the_recorded_category() {
        let e = engine();
        let mut q = query(near_station("p1"), near_station("p6"));
        q.depart_ts = 1_700_000_100;
        assert_eq!(e.context("demo", &q).weather.unwrap().weather, Weather::Sunny);
        q.weather = Some(Weather::Snow);
        let w = e.context("demo", &q).weather.unwrap();
        assert_eq!((w.weather, w.temperature_c), (Weather::Snow, 21.0));
    }
}
