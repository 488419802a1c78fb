//! HTTP JSON API over a [`Scenario`].
//!
//! Every answer is computed at most once per scenario fingerprint and query
//! key. Requests that outlive `long_request_ms` get `202` with a poll token;
//! the computation keeps running and `/api/jobs/{token}` returns the result
//! once it is ready.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use axum::extract::{Path, Query as UrlQuery, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use flowshap_core::config::Config;
use flowshap_core::scenario::{Query, Scenario};
use flowshap_core::Error;
use serde::Serialize;
use tokio::net::TcpListener;
use tokio::sync::OnceCell;
use tower_http::cors::{AllowOrigin, CorsLayer};

/// Seconds a client should wait before retrying while the scenario loads.
pub const RETRY_AFTER_SECONDS: u64 = 1;

/// Error body shared by every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    pub detail: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: status.as_u16(),
            code: code.into(),
            message: message.into(),
            detail: None,
        }
    }

    fn bad_parameter(message: impl Into<String>) -> Self {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_parameter",
            message,
        )
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Config(_) | Error::Capacity(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::State(_) => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let detail = match &e {
            Error::Format { sample, .. } => sample.clone(),
            _ => None,
        };
        ApiError {
            status: status.as_u16(),
            code: e.code().into(),
            message: e.to_string(),
            detail,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = serde_json::to_string(&self).unwrap_or_default();
        let mut r = json_response(status, body);
        if status == StatusCode::SERVICE_UNAVAILABLE {
            r.headers_mut()
                .insert(header::RETRY_AFTER, HeaderValue::from(RETRY_AFTER_SECONDS));
        }
        r
    }
}

fn json_response(status: StatusCode, body: String) -> Response {
    (
        status,
        [(
            header::CONTENT_TYPE,
            HeaderValue::from_static("application/json"),
        )],
        body,
    )
        .into_response()
}

type Outcome = Result<Arc<String>, ApiError>;

enum Phase {
    Loading,
    Ready(Arc<Scenario>),
    Failed(ApiError),
}

struct Shared {
    phase: RwLock<Phase>,
    /// Keyed by fingerprint and query key.
    cache: Mutex<HashMap<String, Arc<OnceCell<Outcome>>>>,
    /// Poll token to cache key.
    jobs: Mutex<HashMap<String, String>>,
    long_request: Duration,
    caching: bool,
}

/// Server state; cheap to clone.
#[derive(Clone)]
pub struct AppState {
    shared: Arc<Shared>,
}

impl AppState {
    /// State that answers `503` until a scenario is installed.
    pub fn loading(long_request: Duration) -> Self {
        AppState {
            shared: Arc::new(Shared {
                phase: RwLock::new(Phase::Loading),
                cache: Mutex::new(HashMap::new()),
                jobs: Mutex::new(HashMap::new()),
                long_request,
                caching: true,
            }),
        }
    }

    pub fn ready(scenario: Arc<Scenario>, long_request: Duration) -> Self {
        let s = AppState::loading(long_request);
        s.install(scenario);
        s
    }

    /// Disables the answer cache and poll tokens; answers are identical
    /// either way.
    pub fn without_cache(self) -> Self {
        let shared = Arc::try_unwrap(self.shared)
            .ok()
            .expect("without_cache must be called before the state is shared");
        AppState {
            shared: Arc::new(Shared {
                caching: false,
                ..shared
            }),
        }
    }

    pub fn install(&self, scenario: Arc<Scenario>) {
        *self.shared.phase.write().unwrap() = Phase::Ready(scenario);
    }

    /// Marks initialization as failed; every data endpoint then reports it.
    pub fn fail(&self, error: Error) {
        let mut e = ApiError::from(error);
        e.status = StatusCode::SERVICE_UNAVAILABLE.as_u16();
        *self.shared.phase.write().unwrap() = Phase::Failed(e);
    }

    fn scenario(&self) -> Result<Arc<Scenario>, ApiError> {
        match &*self.shared.phase.read().unwrap() {
            Phase::Ready(s) => Ok(s.clone()),
            Phase::Loading => Err(ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "initializing",
                "the scenario is still loading",
            )),
            Phase::Failed(e) => Err(e.clone()),
        }
    }

    fn cell(&self, key: &str) -> Arc<OnceCell<Outcome>> {
        let mut cache = self.shared.cache.lock().unwrap();
        cache.entry(key.to_string()).or_default().clone()
    }

    /// Computes (or reuses) the answer to `query`, waiting in the current
    /// task until it is ready.
    pub async fn answer(&self, query: Query) -> Outcome {
        let scenario = self.scenario()?;
        if !self.shared.caching {
            return compute(scenario, query).await;
        }
        let key = cache_key(&scenario, &query);
        let cell = self.cell(&key);
        cell.get_or_init(|| compute(scenario, query)).await.clone()
    }

    async fn respond(&self, query: Query) -> Response {
        let scenario = match self.scenario() {
            Ok(s) => s,
            Err(e) => return e.into_response(),
        };
        // polling needs the cache, so uncached requests always run to completion
        if !query.is_heavy() || !self.shared.caching {
            return outcome_response(self.answer(query).await);
        }
        let token = token_of(&scenario, &query);
        let key = cache_key(&scenario, &query);
        let this = self.clone();
        let task = tokio::spawn(async move { this.answer(query).await });
        match tokio::time::timeout(self.shared.long_request, task).await {
            Ok(Ok(outcome)) => outcome_response(outcome),
            Ok(Err(join)) => ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "internal",
                format!("computation failed: {join}"),
            )
            .into_response(),
            Err(_) => {
                self.shared.jobs.lock().unwrap().insert(token.clone(), key);
                pending(&token)
            }
        }
    }

    fn poll(&self, token: &str) -> Response {
        let key = self.shared.jobs.lock().unwrap().get(token).cloned();
        let Some(key) = key else {
            return ApiError::new(
                StatusCode::NOT_FOUND,
                "not_found",
                format!("unknown job {token}"),
            )
            .into_response();
        };
        match self.cell(&key).get() {
            Some(outcome) => outcome_response(outcome.clone()),
            None => pending(token),
        }
    }

    /// Computes glyph documents for every valid base in the background.
    pub fn precompute_glyphs(&self) -> Option<tokio::task::JoinHandle<()>> {
        let scenario = self.scenario().ok()?;
        let [lo, hi] = scenario.meta().base_range?;
        let this = self.clone();
        Some(tokio::spawn(async move {
            for base in lo..=hi {
                let _ = this.answer(Query::Glyphs { base, h: None }).await;
            }
            log::info!("glyphs precomputed for bases {lo}..={hi}");
        }))
    }
}

async fn compute(scenario: Arc<Scenario>, query: Query) -> Outcome {
    match tokio::task::spawn_blocking(move || scenario.answer(&query)).await {
        Ok(Ok(body)) => Ok(Arc::new(body)),
        Ok(Err(e)) => Err(e.into()),
        Err(join) => Err(ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            format!("computation failed: {join}"),
        )),
    }
}

fn cache_key(scenario: &Scenario, query: &Query) -> String {
    format!("{}:{}", scenario.fingerprint, query.key())
}

/// Deterministic token: the same request always polls the same job.
fn token_of(scenario: &Scenario, query: &Query) -> String {
    format!("{}-{}", scenario.fingerprint, query.key().replace('/', "-"))
}

#[derive(Serialize)]
struct Pending<'a> {
    status: &'static str,
    token: &'a str,
    poll: String,
}

fn pending(token: &str) -> Response {
    let body = serde_json::to_string(&Pending {
        status: "pending",
        token,
        poll: format!("/api/jobs/{token}"),
    })
    .unwrap_or_default();
    json_response(StatusCode::ACCEPTED, body)
}

fn outcome_response(outcome: Outcome) -> Response {
    match outcome {
        Ok(body) => json_response(StatusCode::OK, body.as_str().to_owned()),
        Err(e) => e.into_response(),
    }
}

type Params = HashMap<String, String>;

fn required(params: &Params, name: &str) -> Result<usize, ApiError> {
    match params.get(name) {
        None => Err(ApiError::bad_parameter(format!(
            "missing query parameter `{name}`"
        ))),
        Some(v) => parse_index(name, v),
    }
}

fn optional(params: &Params, name: &str) -> Result<Option<usize>, ApiError> {
    params.get(name).map(|v| parse_index(name, v)).transpose()
}

fn parse_index(name: &str, v: &str) -> Result<usize, ApiError> {
    v.parse().map_err(|_| {
        ApiError::bad_parameter(format!(
            "`{name}` must be a non-negative integer, got `{v}`"
        ))
    })
}

fn path_index(what: &str, v: &str) -> Result<usize, ApiError> {
    v.parse().map_err(|_| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "not_found",
            format!("{what} `{v}` does not exist"),
        )
    })
}

async fn run(state: AppState, query: Result<Query, ApiError>) -> Response {
    match query {
        Ok(q) => state.respond(q).await,
        Err(e) => e.into_response(),
    }
}

async fn meta(State(s): State<AppState>) -> Response {
    run(s, Ok(Query::Meta)).await
}

async fn clusters(State(s): State<AppState>) -> Response {
    run(s, Ok(Query::Clusters)).await
}

async fn flows(State(s): State<AppState>, UrlQuery(p): UrlQuery<Params>) -> Response {
    run(s, required(&p, "t").map(|t| Query::Flows { t })).await
}

async fn trajectories(State(s): State<AppState>, UrlQuery(p): UrlQuery<Params>) -> Response {
    run(s, required(&p, "t").map(|t| Query::Trajectories { t })).await
}

async fn forecast(State(s): State<AppState>, UrlQuery(p): UrlQuery<Params>) -> Response {
    run(s, required(&p, "base").map(|base| Query::Forecast { base })).await
}

async fn glyphs(State(s): State<AppState>, UrlQuery(p): UrlQuery<Params>) -> Response {
    let q = (|| {
        Ok(Query::Glyphs {
            base: required(&p, "base")?,
            h: optional(&p, "h")?,
        })
    })();
    run(s, q).await
}

async fn cluster_attribution(
    State(s): State<AppState>,
    Path(cluster): Path<String>,
    UrlQuery(p): UrlQuery<Params>,
) -> Response {
    let q = (|| {
        Ok(Query::ClusterAttribution {
            cluster: path_index("cluster", &cluster)?,
            base: required(&p, "base")?,
            h: optional(&p, "h")?,
        })
    })();
    run(s, q).await
}

async fn grid_attribution(
    State(s): State<AppState>,
    Path((row, col)): Path<(String, String)>,
    UrlQuery(p): UrlQuery<Params>,
) -> Response {
    let q = (|| {
        Ok(Query::GridAttribution {
            row: path_index("row", &row)?,
            col: path_index("column", &col)?,
            base: required(&p, "base")?,
            h: optional(&p, "h")?,
        })
    })();
    run(s, q).await
}

async fn job(State(s): State<AppState>, Path(token): Path<String>) -> Response {
    s.poll(&token)
}

async fn health(State(s): State<AppState>) -> Response {
    let status = match s.scenario() {
        Ok(_) => "ready",
        Err(e) if e.code == "initializing" => "initializing",
        Err(_) => "failed",
    };
    json_response(StatusCode::OK, format!(r#"{{"status":"{status}"}}"#))
}

async fn fallback() -> Response {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint").into_response()
}

fn cors(origin: &str) -> CorsLayer {
    let layer = CorsLayer::new().allow_methods([Method::GET, Method::OPTIONS]);
    if origin == "*" {
        return layer.allow_origin(AllowOrigin::any());
    }
    match HeaderValue::from_str(origin) {
        Ok(v) => layer.allow_origin(v),
        Err(_) => {
            log::warn!("invalid cors_origin {origin:?}; cross-origin requests are refused");
            layer
        }
    }
}

/// All `/api` routes with CORS for `cors_origin` (`*` allows any).
pub fn router(state: AppState, cors_origin: &str) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/meta", get(meta))
        .route("/api/flows", get(flows))
        .route("/api/trajectories", get(trajectories))
        .route("/api/forecast", get(forecast))
        .route("/api/clusters", get(clusters))
        .route("/api/glyphs", get(glyphs))
        .route(
            "/api/attributions/cluster/{cluster}",
            get(cluster_attribution),
        )
        .route("/api/attributions/grid/{row}/{col}", get(grid_attribution))
        .route("/api/jobs/{token}", get(job))
        .fallback(fallback)
        .layer(cors(cors_origin))
        .with_state(state)
}

/// Loads the scenario (from `config.artifacts` when set) in the background
/// while already answering `503`, then serves until the listener closes.
pub async fn serve_on(listener: TcpListener, config: Config) -> std::io::Result<()> {
    let state = AppState::loading(Duration::from_millis(config.long_request_ms));
    let app = router(state.clone(), &config.cors_origin);
    let loader = state.clone();
    tokio::spawn(async move {
        let precompute = config.precompute_glyphs;
        let built = tokio::task::spawn_blocking(move || match config.artifacts.clone() {
            Some(dir) => Scenario::from_artifacts(config, &dir),
            None => Scenario::build(config),
        })
        .await;
        match built {
            Ok(Ok(s)) => {
                log::info!("scenario {} ready", s.fingerprint);
                loader.install(Arc::new(s));
                if precompute {
                    loader.precompute_glyphs();
                }
            }
            Ok(Err(e)) => {
                log::error!("scenario failed to load: {e}");
                loader.fail(e);
            }
            Err(join) => {
                log::error!("scenario loader panicked: {join}");
                loader.fail(Error::State(format!("loader panicked: {join}")));
            }
        }
    });
    axum::serve(listener, app).await
}

/// Binds `config.bind:config.port` and serves.
pub async fn serve(config: Config) -> std::io::Result<()> {
    let addr: SocketAddr = format!("{}:{}", config.bind, config.port)
        .parse()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;
    let listener = TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    serve_on(listener, config).await
}
