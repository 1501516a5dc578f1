//! Offline evaluation: NDCG@k, statistical baselines, synthetic query logs
//! with a planted preference, and latency profiling by trip distance.

use std::collections::BTreeMap;
use std::time::Duration;

use chrono::{DateTime, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{Engine, QueryError, RouteQuery};
use crate::geo::{BoundingBox, GeoPoint};
use crate::model::{Feedback, FeedbackKind, PresentedRoute, QueryLogEntry, RouteSummary};
use crate::rerank::{CityProfile, RankModel, TravelContext};

/// `Σ_{i≤k} (2^rel_i − 1) / log2(i + 1)` over `ranked`, divided by the same
/// sum for the ideal order; 0 when nothing is relevant.
pub fn ndcg_at_k(ranked: &[u32], k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    let dcg = |g: &[u32]| -> f64 {
        g.iter().take(k).enumerate().map(|(i, &r)| (2f64.powi(r as i32) - 1.0) / ((i + 2) as f64).log2()).sum()
    };
    let mut ideal = ranked.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(&ideal);
    if idcg == 0.0 {
        0.0
    } else {
        dcg(ranked) / idcg
    }
}

/// Relevance per presented route: 2 for the earliest feedback, 1 for any
/// later feedback, 0 otherwise.
pub fn grades(entry: &QueryLogEntry) -> Vec<u32> {
    let first = entry.first_feedback();
    let earliest = first.iter().flatten().min().copied();
    first
        .iter()
        .map(|t| match (t, earliest) {
            (Some(t), Some(e)) if *t == e => 2,
            (Some(_), _) => 1,
            _ => 0,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Baseline {
    Shortest,
    Fastest,
    LeastTransfer,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Shortest, Baseline::Fastest, Baseline::LeastTransfer];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Shortest => "Shortest",
            Baseline::Fastest => "Fastest",
            Baseline::LeastTransfer => "LeastTransfer",
        }
    }
}

/// Ascending by distance, ETA or transfers; ties by signature.
pub fn baseline_rank(routes: &[RouteSummary], b: Baseline) -> Vec<usize> {
    let key = |r: &RouteSummary| match b {
        Baseline::Shortest => r.distance_m,
        Baseline::Fastest => r.eta_s,
        Baseline::LeastTransfer => r.n_transfers as f64,
    };
    let mut order: Vec<usize> = (0..routes.len()).collect();
    order.sort_by(|&x, &y| key(&routes[x]).total_cmp(&key(&routes[y])).then(routes[x].signature.cmp(&routes[y].signature)));
    order
}

/// Simulated users. In rush hour they take the fastest route. Off peak they
/// take the fewest transfers and, among those, the route with the most
/// walking. With probability `epsilon` a uniformly random route is taken
/// instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedPreference {
    /// UTC hours counted as rush hour.
    pub rush_hours: Vec<u32>,
    pub epsilon: f64,
    /// Chance of a later, second feedback on the runner-up.
    pub second_feedback: f64,
}

impl Default for PlantedPreference {
    fn default() -> Self {
        Self { rush_hours: vec![7, 8], epsilon: 0.05, second_feedback: 0.3 }
    }
}

impl PlantedPreference {
    pub fn is_rush(&self, ts: i64) -> bool {
        let h = DateTime::from_timestamp(ts, 0).unwrap_or_default().hour();
        self.rush_hours.contains(&h)
    }

    /// Routes from most to least preferred.
    pub fn order(&self, ts: i64, routes: &[RouteSummary]) -> Vec<usize> {
        let mut order: Vec<usize> = (0..routes.len()).collect();
        let rush = self.is_rush(ts);
        order.sort_by(|&x, &y| {
            let (a, b) = (&routes[x], &routes[y]);
            let primary = if rush {
                a.eta_s.total_cmp(&b.eta_s)
            } else {
                a.n_transfers
                    .cmp(&b.n_transfers)
                    .then(b.walk_m().total_cmp(&a.walk_m()))
                    .then(a.distance_m.total_cmp(&b.distance_m))
                    .then(a.eta_s.total_cmp(&b.eta_s))
            };
            primary.then(a.signature.cmp(&b.signature))
        });
        order
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthLogParams {
    pub n_queries: usize,
    pub seed: u64,
    pub preference: PlantedPreference,
    /// Straight-line trip length range.
    pub min_trip_m: f64,
    pub max_trip_m: f64,
    /// Departures are drawn uniformly from `days` days after `start_ts`
    /// (default: the first weather record of the city).
    pub start_ts: Option<i64>,
    pub days: u32,
    /// Queries whose shortlist has fewer routes are resampled.
    pub min_routes: usize,
    /// Restrict departures to these UTC hours; all hours when empty.
    pub hours: Vec<u32>,
}

impl Default for SynthLogParams {
    fn default() -> Self {
        Self {
            n_queries: 1000,
            seed: 7,
            preference: PlantedPreference::default(),
            min_trip_m: 1000.0,
            max_trip_m: 15_000.0,
            start_ts: None,
            days: 60,
            min_routes: 2,
            hours: Vec::new(),
        }
    }
}

const FEEDBACK_KINDS: [FeedbackKind; 4] =
    [FeedbackKind::Favorite, FeedbackKind::Share, FeedbackKind::Screenshot, FeedbackKind::Navigation];

/// Samples queries over the engine's cities, runs bind → generate → primary
/// rank without a time budget, and records feedback from the planted
/// preference. Reproducible from `params.seed`.
pub fn synth_query_log(engine: &Engine, params: &SynthLogParams) -> Vec<QueryLogEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let limits = engine.settings.limits.clone().unbounded_time();
    let cities: Vec<(String, BoundingBox, i64)> = engine
        .ptg
        .cities
        .iter()
        .filter_map(|(id, g)| {
            let b = BoundingBox::of_points(g.physical.stations.iter().map(|s| &s.location))?;
            let start =
                params.start_ts.or_else(|| engine.datasets[id].weather.first().map(|w| w.timestamp)).unwrap_or(1_704_067_200);
            Some((id.clone(), b, start))
        })
        .collect();
    let mut out = Vec::with_capacity(params.n_queries);
    if cities.is_empty() {
        return out;
    }
    let max_attempts = params.n_queries.saturating_mul(50).max(100);
    let mut attempts = 0;
    while out.len() < params.n_queries && attempts < max_attempts {
        attempts += 1;
        let (city, bbox, start) = &cities[rng.gen_range(0..cities.len())];
        let point = |rng: &mut ChaCha8Rng| {
            GeoPoint::new(rng.gen_range(bbox.min.lat..=bbox.max.lat), rng.gen_range(bbox.min.lon..=bbox.max.lon))
        };
        let origin = point(&mut rng);
        let destination = point(&mut rng);
        let mut ts = start + rng.gen_range(0..params.days.max(1) as i64 * 86_400);
        if !params.hours.is_empty() {
            let h = params.hours[rng.gen_range(0..params.hours.len())] as i64;
            ts = ts - ts.rem_euclid(86_400) + h * 3600 + ts.rem_euclid(3600);
        }
        let d = origin.haversine_m(&destination);
        if d < params.min_trip_m || d > params.max_trip_m {
            continue;
        }
        let q = RouteQuery { origin, destination, depart_ts: ts, weather: None };
        let Ok(plan) = engine.plan_with(&q, &limits) else { continue };
        if plan.summaries.len() < params.min_routes.max(1) {
            continue;
        }
        let query_id = format!("q{:06}", out.len());
        let pref = &params.preference;
        let order = pref.order(ts, &plan.summaries);
        let chosen = if rng.gen_bool(pref.epsilon.clamp(0.0, 1.0)) { rng.gen_range(0..order.len()) } else { order[0] };
        let route_id = |i: usize| format!("{query_id}-{}", i + 1);
        let t1 = ts + rng.gen_range(30..600);
        let mut feedback =
            vec![Feedback { route_id: route_id(chosen), kind: FEEDBACK_KINDS[rng.gen_range(0..4)], timestamp: t1 }];
        if rng.gen_bool(pref.second_feedback.clamp(0.0, 1.0)) {
            if let Some(&second) = order.iter().find(|&&i| i != chosen) {
                feedback.push(Feedback {
                    route_id: route_id(second),
                    kind: FEEDBACK_KINDS[rng.gen_range(0..4)],
                    timestamp: t1 + rng.gen_range(1..300),
                });
            }
        }
        out.push(QueryLogEntry {
            query_id: query_id.clone(),
            city: city.clone(),
            origin,
            destination,
            timestamp: ts,
            weather: plan.context.weather.clone(),
            presented_routes: plan
                .summaries
                .into_iter()
                .enumerate()
                .map(|(i, summary)| PresentedRoute { route_id: route_id(i), summary })
                .collect(),
            feedback,
        });
    }
    out
}

/// Every fifth entry (by position) is held out.
pub fn holdout_split(log: &[QueryLogEntry]) -> (Vec<QueryLogEntry>, Vec<QueryLogEntry>) {
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, e) in log.iter().enumerate() {
        if i % 5 == 4 { &mut test } else { &mut train }.push(e.clone());
    }
    (train, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScores {
    pub method: String,
    pub queries: usize,
    pub ndcg1: f64,
    pub ndcg3: f64,
    pub ndcg5: f64,
}

/// NDCG@{1,3,5} of the baselines and, when given, the model, over log
/// entries that have feedback.
pub fn evaluate_rankings(
    log: &[QueryLogEntry],
    model: Option<&RankModel>,
    profiles: &BTreeMap<String, CityProfile>,
) -> Vec<MethodScores> {
    let judged: Vec<(&QueryLogEntry, Vec<u32>, Vec<RouteSummary>)> = log
        .iter()
        .map(|e| (e, grades(e), e.presented_routes.iter().map(|r| r.summary.clone()).collect()))
        .filter(|(_, g, _)| g.iter().any(|&x| x > 0))
        .collect();
    let score = |name: &str, rank: &dyn Fn(&QueryLogEntry, &[RouteSummary]) -> Vec<usize>| {
        let mut sums = [0.0; 3];
        for (e, g, routes) in &judged {
            let ranked: Vec<u32> = rank(e, routes).into_iter().map(|i| g[i]).collect();
            for (s, k) in sums.iter_mut().zip([1, 3, 5]) {
                *s += ndcg_at_k(&ranked, k);
            }
        }
        let n = judged.len().max(1) as f64;
        MethodScores {
            method: name.to_string(),
            queries: judged.len(),
            ndcg1: sums[0] / n,
            ndcg3: sums[1] / n,
            ndcg5: sums[2] / n,
        }
    };
    let mut out: Vec<MethodScores> = Baseline::ALL.iter().map(|&b| score(b.name(), &|_, r| baseline_rank(r, b))).collect();
    if let Some(m) = model {
        out.push(score("Reranker", &|e, r| {
            m.rerank(&TravelContext::of_entry(e), r, profiles.get(&e.city))
                .map(|x| x.order)
                .unwrap_or_else(|_| (0..r.len()).collect())
        }));
    }
    out
}

/// Mean and 95th percentile (nearest rank), milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub p95_ms: f64,
}

impl LatencyStats {
    pub fn of(samples: &[Duration]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        ms.sort_by(f64::total_cmp);
        let rank = ((0.95 * ms.len() as f64).ceil() as usize).clamp(1, ms.len());
        Self { mean_ms: ms.iter().sum::<f64>() / ms.len() as f64, p95_ms: ms[rank - 1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyBucket {
    pub min_m: f64,
    pub max_m: f64,
    pub queries: usize,
    pub routing: LatencyStats,
    pub ranking: LatencyStats,
    pub total: LatencyStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub buckets: Vec<LatencyBucket>,
    pub overall: LatencyBucket,
    /// Buckets left out for having no queries.
    pub notes: Vec<String>,
    /// Failed queries by error code.
    pub failures: BTreeMap<String, usize>,
    pub ndcg: Vec<MethodScores>,
}

/// Default trip-distance bucket edges, meters.
pub const DEFAULT_BUCKETS_M: [f64; 6] = [0.0, 2_000.0, 5_000.0, 10_000.0, 20_000.0, f64::INFINITY];

/// Runs every query through the full pipeline and profiles it, then scores
/// rankings on `log`.
pub fn run_benchmark(engine: &Engine, queries: &[RouteQuery], edges_m: &[f64], log: &[QueryLogEntry]) -> BenchmarkReport {
    let mut samples: Vec<(f64, Duration, Duration, Duration)> = Vec::new();
    let mut failures: BTreeMap<String, usize> = BTreeMap::new();
    for q in queries {
        let result = engine.plan(q).and_then(|mut p| engine.order(&mut p).map(|_| p.timings));
        match result {
            Ok(t) => samples.push((q.origin.haversine_m(&q.destination), t.routing, t.ranking(), t.total())),
            Err(e) => *failures.entry(QueryError::code(&e).to_string()).or_default() += 1,
        }
    }
    let bucket = |lo: f64, hi: f64| {
        let inside: Vec<_> = samples.iter().filter(|s| s.0 >= lo && s.0 < hi).collect();
        LatencyBucket {
            min_m: lo,
            max_m: hi,
            queries: inside.len(),
            routing: LatencyStats::of(&inside.iter().map(|s| s.1).collect::<Vec<_>>()),
            ranking: LatencyStats::of(&inside.iter().map(|s| s.2).collect::<Vec<_>>()),
            total: LatencyStats::of(&inside.iter().map(|s| s.3).collect::<Vec<_>>()),
        }
    };
    let mut buckets = Vec::new();
    let mut notes = Vec::new();
    for w in edges_m.windows(2) {
        let b = bucket(w[0], w[1]);
        if b.queries == 0 {
            notes.push(format!("bucket {}–{} m omitted: no queries", w[0], w[1]));
        } else {
            buckets.push(b);
        }
    }
    BenchmarkReport {
        buckets,
        overall: bucket(f64::NEG_INFINITY, f64::INFINITY),
        notes,
        failures,
        ndcg: evaluate_rankings(log, engine.model.as_ref(), &engine.profiles),
    }
}

/// Log entries as benchmark queries.
pub fn queries_of(log: &[QueryLogEntry]) -> Vec<RouteQuery> {
    log.iter()
        .map(|e| RouteQuery {
            origin: e.origin,
            destination: e.destination,
            depart_ts: e.timestamp,
            weather: e.weather.as_ref().map(|w| w.weather),
        })
        .collect()
}

/// Plain-text rendering of a report.
pub fn format_report(r: &BenchmarkReport) -> String {
    let mut s = String::new();
    s.push_str("distance (m)        queries  routing mean/p95 (ms)  ranking mean/p95 (ms)  total mean/p95 (ms)\n");
    let row = |b: &LatencyBucket, label: String| {
        format!(
            "{label:<19} {:>7}  {:>9.2} / {:<9.2}  {:>9.2} / {:<9.2}  {:>8.2} / {:<8.2}\n",
            b.queries, b.routing.mean_ms, b.routing.p95_ms, b.ranking.mean_ms, b.ranking.p95_ms, b.total.mean_ms, b.total.p95_ms
        )
    };
    for b in &r.buckets {
        let hi = if b.max_m.is_finite() { format!("{}", b.max_m) } else { "∞".into() };
        s.push_str(&row(b, format!("{}–{hi}", b.min_m)));
    }
    s.push_str(&row(&r.overall, "all".into()));
    for n in &r.notes {
        s.push_str(&format!("note: {n}\n"));
    }
    for (code, n) in &r.failures {
        s.push_str(&format!("failed: {code} × {n}\n"));
    }
    s.push_str("\nmethod          NDCG@1  NDCG@3  NDCG@5  queries\n");
    for m in &r.ndcg {
        s.push_str(&format!("{:<15} {:.4}  {:.4}  {:.4}  {}\n", m.method, m.ndcg1, m.ndcg3, m.ndcg5, m.queries));
    }
    s
}
