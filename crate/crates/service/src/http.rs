//! The HTTP front end: `/v1/routes`, `/v1/stations`, `/v1/health`, static
//! files under `/`.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use polestar_core::engine::{Engine, PhaseTimings, QueryError, RouteQuery};
use polestar_core::geo::{BoundingBox, GeoPoint};
use polestar_core::model::Weather;
use serde::Serialize;
use tower_http::services::ServeDir;

/// The engine handle shared by all handlers. Empty until loading finishes;
/// a reload replaces the whole engine at once.
#[derive(Clone, Default)]
pub struct EngineSlot {
    inner: Arc<RwLock<Option<Arc<Engine>>>>,
    version: Arc<RwLock<u64>>,
}

impl EngineSlot {
    pub fn loaded(engine: Engine) -> Self {
        let slot = Self::default();
        slot.install(engine);
        slot
    }

    pub fn get(&self) -> Option<Arc<Engine>> {
        self.inner.read().expect("engine slot poisoned").clone()
    }

    /// Swaps in a new engine; returns its version (1 for the first).
    pub fn install(&self, engine: Engine) -> u64 {
        let mut v = self.version.write().expect("engine slot poisoned");
        *self.inner.write().expect("engine slot poisoned") = Some(Arc::new(engine));
        *v += 1;
        *v
    }

    pub fn version(&self) -> u64 {
        *self.version.read().expect("engine slot poisoned")
    }
}

#[derive(Clone)]
pub struct AppState {
    pub engine: EngineSlot,
    pub request_timeout: Duration,
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/v1/routes", get(routes))
        .route("/v1/stations", get(stations))
        .route("/v1/health", get(health))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    code: String,
    message: String,
}

fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody { code: code.into(), message: message.into() })).into_response()
}

fn bad_request(message: impl Into<String>) -> Response {
    error(StatusCode::BAD_REQUEST, "bad_request", message)
}

fn not_loaded() -> Response {
    error(StatusCode::SERVICE_UNAVAILABLE, "starting", "engine is still loading")
}

fn query_error(e: &QueryError) -> Response {
    let status = StatusCode::from_u16(e.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    error(status, e.code(), e.to_string())
}

pub fn parse_point(s: &str) -> Result<GeoPoint, String> {
    let (lat, lon) = s.split_once(',').ok_or_else(|| format!("expected <lat>,<lon>, got {s:?}"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("not a number: {v:?}"));
    Ok(GeoPoint::new(num(lat)?, num(lon)?))
}

/// `min_lat,min_lon,max_lat,max_lon`.
pub fn parse_bbox(s: &str) -> Result<BoundingBox, String> {
    let v: Vec<f64> =
        s.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| format!("not a number: {x:?}"))).collect::<Result<_, _>>()?;
    let [a, b, c, d] = v[..] else {
        return Err("bbox must be min_lat,min_lon,max_lat,max_lon".into());
    };
    Ok(BoundingBox { min: GeoPoint::new(a, b), max: GeoPoint::new(c, d) })
}

pub fn parse_weather(s: &str) -> Result<Weather, String> {
    Weather::parse(s).ok_or_else(|| {
        let known: Vec<&str> = Weather::ALL.iter().map(|w| w.as_str()).collect();
        format!("unknown weather {s:?}; expected one of {}", known.join(", "))
    })
}

pub fn now_epoch() -> i64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs() as i64)
}

/// Builds a query from `o`, `d`, optional `t` (epoch seconds, default now)
/// and optional `weather`.
pub fn route_query(params: &HashMap<String, String>) -> Result<RouteQuery, String> {
    let field = |k: &str| params.get(k).ok_or_else(|| format!("missing parameter {k}"));
    let origin = parse_point(field("o")?)?;
    let destination = parse_point(field("d")?)?;
    let depart_ts = match params.get("t") {
        Some(t) => t.trim().parse::<i64>().map_err(|_| format!("t must be epoch seconds, got {t:?}"))?,
        None => now_epoch(),
    };
    let weather = params.get("weather").filter(|w| !w.is_empty()).map(|w| parse_weather(w)).transpose()?;
    Ok(RouteQuery { origin, destination, depart_ts, weather })
}

/// `Server-Timing` header value in milliseconds.
pub fn server_timing(t: &PhaseTimings) -> String {
    let ms = |d: Duration| d.as_secs_f64() * 1000.0;
    format!(
        "bind;dur={:.3}, routing;dur={:.3}, primary;dur={:.3}, rerank;dur={:.3}, total;dur={:.3}",
        ms(t.bind),
        ms(t.routing),
        ms(t.primary),
        ms(t.rerank),
        ms(t.total())
    )
}

async fn routes(State(state): State<AppState>, Query(params): Query<HashMap<String, String>>) -> Response {
    let q = match route_query(&params) {
        Ok(q) => q,
        Err(m) => return bad_request(m),
    };
    let Some(engine) = state.engine.get() else { return not_loaded() };
    let work = tokio::task::spawn_blocking(move || engine.handle_route_query(&q));
    match tokio::time::timeout(state.request_timeout, work).await {
        Err(_) => error(StatusCode::GATEWAY_TIMEOUT, "timeout", "request exceeded the configured timeout"),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
        Ok(Ok(Err(e))) => query_error(&e),
        Ok(Ok(Ok((response, timings)))) => {
            tracing::debug!(city = %response.city, routes = response.routes.len(), "{}", server_timing(&timings));
            let mut r = Json(response).into_response();
            if let Ok(v) = HeaderValue::from_str(&server_timing(&timings)) {
                r.headers_mut().insert(header::HeaderName::from_static("server-timing"), v);
            }
            r
        }
    }
}

async fn stations(State(state): State<AppState>, Query(params): Query<HashMap<String, String>>) -> Response {
    let bbox = match params.get("bbox").map(|b| parse_bbox(b)) {
        Some(Ok(b)) => b,
        Some(Err(m)) => return bad_request(m),
        None => return bad_request("missing parameter bbox"),
    };
    let Some(engine) = state.engine.get() else { return not_loaded() };
    match engine.handle_stations(&bbox) {
        Ok(list) => Json(list).into_response(),
        Err(e) => query_error(&e),
    }
}

async fn health(State(state): State<AppState>) -> Response {
    match state.engine.get() {
        Some(engine) => {
            let mut report = serde_json::to_value(engine.health()).expect("health report serializes");
            report["engine_version"] = state.engine.version().into();
            Json(report).into_response()
        }
        None => (StatusCode::SERVICE_UNAVAILABLE, Json(serde_json::json!({ "status": "starting" }))).into_response(),
    }
}
