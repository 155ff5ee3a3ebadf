//! HTTP/JSON front end over `tdoa-core`.
//!
//! Every request body carries `"v": 1`. Responses echo `request_hash`, the
//! SHA-256 of the request re-serialized with sorted keys, for use as a cache
//! key. Malformed or schema-violating bodies get 400; requests that parse but
//! cannot be served (limits, invalid or degenerate geometry) get 422.

use axum::body::Bytes;
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tower_http::cors::{AllowOrigin, CorsLayer};

use tdoa_core::dop::{dop_map, DopKind, GridSpec};
use tdoa_core::evaluation::{builtin_scenario, rmse_track, simulate_track_stream, Scenario};
use tdoa_core::geometry::{pair_count, AnchorEntry, PairIndex};
use tdoa_core::io::{grid_to_json, trajectory_to_json, ScenarioFile};
use tdoa_core::measurement::{toa_to_tdoa, ToaSample};
use tdoa_core::tracking::track;
use tdoa_core::{locate, AnchorSet, EstimatorKind, Point, TdoaError, TdoaVector};

pub const API_VERSION: u32 = 1;
pub const MAX_ANCHORS: usize = 32;
pub const MAX_GRID_SIDE: usize = 400;
pub const MAX_STEPS: usize = 10_000;

pub const OPENAPI: &str = include_str!("../openapi.yaml");

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Origins allowed by CORS. Empty disables CORS headers.
    pub allowed_origins: Vec<String>,
}

impl ServiceConfig {
    /// Reads `TDOA_ALLOWED_ORIGINS` (comma separated).
    pub fn from_env() -> Self {
        let allowed_origins = std::env::var("TDOA_ALLOWED_ORIGINS")
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default();
        Self { allowed_origins }
    }
}

pub fn router(config: &ServiceConfig) -> Router {
    let app = Router::new()
        .route("/v1/health", get(health))
        .route("/v1/openapi.yaml", get(openapi))
        .route("/v1/dop-map", post(dop_map_handler))
        .route("/v1/locate", post(locate_handler))
        .route("/v1/simulate-track", post(simulate_track_handler));
    let origins: Vec<HeaderValue> = config
        .allowed_origins
        .iter()
        .filter_map(|o| HeaderValue::from_str(o).ok())
        .collect();
    if origins.is_empty() {
        return app;
    }
    app.layer(
        CorsLayer::new()
            .allow_origin(AllowOrigin::list(origins))
            .allow_methods([Method::GET, Method::POST])
            .allow_headers([header::CONTENT_TYPE]),
    )
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn schema(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            code: "schema",
            message: message.into(),
        }
    }

    fn limit(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            code: "limit",
            message: message.into(),
        }
    }
}

impl From<TdoaError> for ApiError {
    fn from(e: TdoaError) -> Self {
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            code: if e.is_geometric() { "degenerate" } else { "invalid" },
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

/// Parse a body into `T`, returning it with the request hash.
fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<(T, String), ApiError> {
    let value: Value = serde_json::from_slice(body).map_err(|e| ApiError::schema(format!("invalid JSON: {e}")))?;
    match value.get("v") {
        Some(v) if v.as_u64() == Some(API_VERSION as u64) => {}
        Some(v) => return Err(ApiError::schema(format!("unsupported schema version {v}"))),
        None => return Err(ApiError::schema("missing schema version field 'v'")),
    }
    let hash = request_hash(&value);
    let req = serde_json::from_value(value).map_err(|e| ApiError::schema(e.to_string()))?;
    Ok((req, hash))
}

/// SHA-256 of the compact, key-sorted form of a JSON request.
pub fn request_hash(value: &Value) -> String {
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}

async fn blocking<F>(f: F) -> ApiResult
where
    F: FnOnce() -> ApiResult + Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        code: "internal",
        message: e.to_string(),
    })?
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

async fn openapi() -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "application/yaml")], OPENAPI)
}

fn anchor_set(entries: Vec<AnchorEntry>) -> Result<AnchorSet, ApiError> {
    if entries.len() > MAX_ANCHORS {
        return Err(ApiError::limit(format!(
            "anchor limit: at most {MAX_ANCHORS} anchors, got {}",
            entries.len()
        )));
    }
    Ok(AnchorSet::from_entries(entries)?)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

/// `res` is either one number (square grid) or `[nx, ny]`.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum Resolution {
    Square(usize),
    Rect([usize; 2]),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DopMapRequest {
    pub v: u32,
    pub anchors: Vec<AnchorEntry>,
    pub kind: DopKind,
    /// 1-based; required for `linear-cond`.
    #[serde(default)]
    pub central: Option<usize>,
    pub bounds: Bounds,
    pub res: Resolution,
}

pub fn dop_map_response(req: DopMapRequest, hash: String) -> ApiResult {
    let (nx, ny) = match req.res {
        Resolution::Square(n) => (n, n),
        Resolution::Rect([nx, ny]) => (nx, ny),
    };
    if nx > MAX_GRID_SIDE || ny > MAX_GRID_SIDE {
        return Err(ApiError::limit(format!(
            "resolution limit: at most {MAX_GRID_SIDE}×{MAX_GRID_SIDE} cells, got {nx}×{ny}"
        )));
    }
    let anchors = anchor_set(req.anchors)?;
    let b = req.bounds;
    let spec = GridSpec::new(b.x_min, b.x_max, b.y_min, b.y_max, nx, ny)?;
    let central = match req.central {
        Some(0) => return Err(ApiError::schema("central is 1-based")),
        c => c.map(|c| c - 1),
    };
    let grid = dop_map(&anchors, &spec, req.kind, central)?;
    let mut body = grid_to_json(&grid);
    body["best"] = grid
        .best_cell()
        .map_or(Value::Null, |(i, j, value)| json!({ "i": i, "j": j, "value": value }));
    body["v"] = json!(API_VERSION);
    body["request_hash"] = json!(hash);
    Ok(Json(body))
}

async fn dop_map_handler(body: Bytes) -> Response {
    respond(blocking(move || {
        let (req, hash) = parse::<DopMapRequest>(&body)?;
        dop_map_response(req, hash)
    })
    .await)
}

/// TDoA input: canonical pair-ordered `values` (metres), explicit 1-based
/// `pairs` of `[i, j, d_ij]`, or per-anchor `timestamps_s`.
#[derive(Debug, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum TdoaInput {
    Values { values: Vec<f64> },
    Pairs { pairs: Vec<(usize, usize, f64)> },
    Timestamps { timestamps_s: Vec<f64> },
}

impl TdoaInput {
    pub fn to_vector(&self, n: usize) -> Result<TdoaVector, TdoaError> {
        match self {
            TdoaInput::Values { values } => TdoaVector::new(n, values.clone()),
            TdoaInput::Pairs { pairs } => {
                let index = PairIndex::new(n);
                let mut values = vec![None; pair_count(n)];
                for &(i, j, d) in pairs {
                    let bad = || TdoaError::InvalidArgument(format!("pair ({i}, {j}) is not a 1-based anchor pair"));
                    if i == 0 || j == 0 {
                        return Err(bad());
                    }
                    let (row, d) = match (index.index_of(i - 1, j - 1), index.index_of(j - 1, i - 1)) {
                        (Some(r), _) => (r, d),
                        (None, Some(r)) => (r, -d),
                        _ => return Err(bad()),
                    };
                    if values[row].replace(d).is_some() {
                        return Err(TdoaError::InvalidArgument(format!("pair ({i}, {j}) repeated")));
                    }
                }
                let values = values
                    .into_iter()
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| TdoaError::InvalidArgument("every anchor pair must be given".into()))?;
                TdoaVector::new(n, values)
            }
            TdoaInput::Timestamps { timestamps_s } => {
                if timestamps_s.len() != n {
                    return Err(TdoaError::InvalidArgument(format!(
                        "{} timestamps for {n} anchors",
                        timestamps_s.len()
                    )));
                }
                toa_to_tdoa(&ToaSample::from_timestamps(timestamps_s, vec![0.0; n])?)
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocateRequest {
    pub v: u32,
    pub anchors: Vec<AnchorEntry>,
    pub tdoa: TdoaInput,
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub init: Option<Point>,
}

pub fn locate_response(req: LocateRequest, hash: String) -> ApiResult {
    let anchors = anchor_set(req.anchors)?;
    let dhat = req.tdoa.to_vector(anchors.len())?;
    let fix = locate(&anchors, &dhat, req.estimator, req.init)?;
    Ok(Json(json!({
        "v": API_VERSION,
        "request_hash": hash,
        "estimator": req.estimator,
        "x": fix.point.x,
        "y": fix.point.y,
        "diagnostics": fix.diagnostics,
    })))
}

async fn locate_handler(body: Bytes) -> Response {
    respond(blocking(move || {
        let (req, hash) = parse::<LocateRequest>(&body)?;
        locate_response(req, hash)
    })
    .await)
}

/// A built-in scenario name or an inline scenario file.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ScenarioInput {
    Builtin(String),
    Inline(Box<ScenarioFile>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateTrackRequest {
    pub v: u32,
    pub scenario: ScenarioInput,
    /// Overrides the scenario file's seed; default 0.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub sigma_d: Option<f64>,
}

pub fn simulate_track_response(req: SimulateTrackRequest, hash: String) -> ApiResult {
    let (scenario, file_seed) = match req.scenario {
        ScenarioInput::Builtin(name) => (
            builtin_scenario(&name).ok_or_else(|| ApiError::from(TdoaError::InvalidArgument(format!("unknown scenario '{name}'"))))?,
            None,
        ),
        ScenarioInput::Inline(file) => {
            let seed = file.seed;
            (file.into_scenario()?, seed)
        }
    };
    let scenario = match req.sigma_d {
        Some(s) => scenario.with_sigma(s),
        None => scenario,
    };
    let Scenario::Track(s) = scenario else {
        return Err(ApiError::from(TdoaError::InvalidArgument("scenario is not a tracking scenario".into())));
    };
    if s.steps > MAX_STEPS {
        return Err(ApiError::limit(format!("step limit: at most {MAX_STEPS} steps, got {}", s.steps)));
    }
    if s.anchors.len() > MAX_ANCHORS {
        return Err(ApiError::limit(format!("anchor limit: at most {MAX_ANCHORS} anchors")));
    }
    let seed = req.seed.or(file_seed).unwrap_or(0);
    let report = Scenario::Track(s.clone()).run(seed)?;
    let stream = simulate_track_stream(&s, seed)?;
    let trajectory = track(&stream, &s.anchors, s.estimator, &s.tracker)?;
    debug_assert_eq!(report.rmse, rmse_track(&trajectory.estimates()[s.burn_in..], s.segment)?);
    Ok(Json(json!({
        "v": API_VERSION,
        "request_hash": hash,
        "scenario": ScenarioFile::from_scenario(&Scenario::Track(s.clone()), Some(seed)),
        "seed": seed,
        "burn_in": s.burn_in,
        "rmse": report.rmse,
        "trajectory": trajectory_to_json(&trajectory),
    })))
}

async fn simulate_track_handler(body: Bytes) -> Response {
    respond(blocking(move || {
        let (req, hash) = parse::<SimulateTrackRequest>(&body)?;
        simulate_track_response(req, hash)
    })
    .await)
}

fn respond(r: ApiResult) -> Response {
    match r {
        Ok(body) => body.into_response(),
        Err(e) => e.into_response(),
    }
}
