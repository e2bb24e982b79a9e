//! Stateless HTTP API over planning, analysis and simulation.
//!
//! Every route is a pure function of its request body. The request and
//! response types are public so the command-line front end can share the
//! same input resolution and produce identical numbers.

mod api;
mod error;

use std::net::SocketAddr;
use std::path::PathBuf;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderValue, Method};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

pub use api::{
    analyze, curve, plan, power, presets, run_analysis, simulate, AnalyzeInputs, AnalyzeRequest, AnalyzeResponse, CurveRequest,
    CurveResponse, McSpec, PlanRequest, PlanResponse, PowerRequest, PowerResponse, PresetInfo, PresetRowInfo,
    PresetsResponse, SimulateRequest, SimulateResponse,
};
pub use error::ApiError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Default upper bound on Monte Carlo replications per request.
pub const DEFAULT_REPS_CAP: u64 = 10_000;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Largest `reps` accepted by the simulation routes.
    pub reps_cap: u64,
    /// Origins allowed to call the API cross-origin. Empty means same-origin only.
    pub cors_origins: Vec<String>,
    /// Directory of static UI assets served for non-API paths.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            reps_cap: DEFAULT_REPS_CAP,
            cors_origins: Vec::new(),
            static_dir: None,
        }
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::malformed(e.to_string()))
}

fn respond<T: Serialize>(result: Result<T, ApiError>) -> Response {
    match result {
        Ok(v) => Json(v).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn plan_route(body: Bytes) -> Response {
    respond(parse_body(&body).and_then(|r| plan(&r)))
}

async fn power_route(body: Bytes) -> Response {
    respond(parse_body(&body).and_then(|r| power(&r)))
}

async fn analyze_route(body: Bytes) -> Response {
    respond(parse_body(&body).and_then(|r| analyze(&r)))
}

async fn simulate_route(State(cfg): State<ServiceConfig>, body: Bytes) -> Response {
    let req: SimulateRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(e) => return e.into_response(),
    };
    respond(blocking(move || simulate(&req, cfg.reps_cap)).await)
}

async fn curve_route(State(cfg): State<ServiceConfig>, body: Bytes) -> Response {
    let req: CurveRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(e) => return e.into_response(),
    };
    respond(blocking(move || curve(&req, cfg.reps_cap)).await)
}

async fn presets_route() -> Response {
    respond(presets())
}

/// Runs CPU-bound work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

/// Builds the application router.
pub fn router(config: ServiceConfig) -> Router {
    let mut app = Router::new()
        .route("/api/plan", post(plan_route))
        .route("/api/power", post(power_route))
        .route("/api/analyze", post(analyze_route))
        .route("/api/simulate", post(simulate_route))
        .route("/api/curve", post(curve_route))
        .route("/api/presets", get(presets_route));
    if let Some(dir) = &config.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    let origins: Vec<HeaderValue> = config
        .cors_origins
        .iter()
        .filter_map(|o| match HeaderValue::from_str(o) {
            Ok(v) => Some(v),
            Err(_) => {
                log::warn!("ignoring invalid CORS origin {o:?}");
                None
            }
        })
        .collect();
    let app = app.with_state(config);
    if origins.is_empty() {
        app
    } else {
        app.layer(
            CorsLayer::new()
                .allow_origin(origins)
                .allow_methods([Method::GET, Method::POST])
                .allow_headers([axum::http::header::CONTENT_TYPE]),
        )
    }
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(config)).await
}
