use std::sync::Arc;

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use epiecon_core::data::{Panel, N_CONTAINMENT};
use epiecon_core::policy::{
    date_range, efficient_frontier, frontier_points, scenario_trajectories, sweep_scenarios, OpenMask, PolicyScenario,
    ScenarioOutcome,
};
use epiecon_core::sim::{Bundle, Trajectory};
use epiecon_core::ErrorClass;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::{OnceCell, Semaphore};

use crate::args::Common;
use crate::commands::{load_bundle, load_inputs, policy_window};
use crate::config::RunConfig;
use crate::SCHEMA_VERSION;

/// Longest trajectory a single request may ask for.
pub const MAX_API_HORIZON: usize = 365;

/// Scenario start-date window and horizon of the cached frontier.
#[derive(Debug, Clone, Copy)]
pub struct FrontierWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub horizon: usize,
}

/// Shared read-only model state plus the frontier cache.
pub struct AppState {
    bundle: Arc<Bundle>,
    panel: Arc<Panel>,
    panel_hash: String,
    frontier_window: FrontierWindow,
    frontier: OnceCell<Arc<Value>>,
    permits: Semaphore,
}

impl AppState {
    pub fn new(bundle: Bundle, panel: Panel, frontier_window: FrontierWindow, workers: usize) -> anyhow::Result<Self> {
        Ok(AppState {
            panel_hash: panel.content_hash()?,
            bundle: Arc::new(bundle),
            panel: Arc::new(panel),
            frontier_window,
            frontier: OnceCell::new(),
            permits: Semaphore::new(workers.max(1)),
        })
    }
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            kind: "bad_request",
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            kind: "internal",
            message: message.into(),
        }
    }
}

impl From<epiecon_core::Error> for ApiError {
    fn from(e: epiecon_core::Error) -> Self {
        let status = match e.class() {
            ErrorClass::Data => StatusCode::BAD_REQUEST,
            ErrorClass::Numeric => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError {
            status,
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "schema_version": SCHEMA_VERSION,
            "error": { "kind": self.kind, "message": self.message },
        });
        (self.status, Json(body)).into_response()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRequest {
    pub open_mask: [bool; N_CONTAINMENT],
    pub start_date: NaiveDate,
    pub horizon: usize,
    #[serde(default = "unit_scale")]
    pub blm_scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/panel", get(panel_summary))
        .route("/api/frontier", get(frontier))
        .route("/api/simulate", post(simulate))
        .with_state(state)
}

async fn panel_summary(State(state): State<Arc<AppState>>) -> Json<Value> {
    let p = &state.panel;
    let last = p.records.last();
    Json(json!({
        "schema_version": SCHEMA_VERSION,
        "panel_hash": state.panel_hash,
        "start": p.start(),
        "end": p.end(),
        "days": p.len(),
        "population": state.bundle.population(),
        "last": last,
    }))
}

fn frontier_payload(state: &AppState) -> Result<Value, ApiError> {
    let window = state.frontier_window;
    let dates = date_range(window.start, window.end)?;
    let rows = sweep_scenarios(&state.bundle, &state.panel, &dates, window.horizon)?;
    let outcomes: Vec<ScenarioOutcome> = rows.iter().map(|r| r.1).collect();
    let on_frontier = efficient_frontier(&outcomes);
    let points: Vec<Value> = rows
        .iter()
        .enumerate()
        .map(|(i, (mask, o))| {
            json!({
                "mask": mask,
                "label": mask.to_string(),
                "open": mask.to_bools(),
                "d_employment_pp": o.d_employment,
                "d_cases": o.d_cases,
                "on_frontier": on_frontier.contains(&i),
            })
        })
        .collect();
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "panel_hash": state.panel_hash,
        "start": window.start,
        "end": window.end,
        "horizon": window.horizon,
        "points": points,
        "frontier": frontier_points(&rows),
    }))
}

async fn frontier(State(state): State<Arc<AppState>>) -> Result<Json<Value>, ApiError> {
    let payload = state
        .frontier
        .get_or_try_init(|| async {
            let _permit = state
                .permits
                .acquire()
                .await
                .map_err(|e| ApiError::internal(e.to_string()))?;
            let s = state.clone();
            let value = tokio::task::spawn_blocking(move || frontier_payload(&s))
                .await
                .map_err(|e| ApiError::internal(e.to_string()))??;
            Ok::<_, ApiError>(Arc::new(value))
        })
        .await?;
    Ok(Json((**payload).clone()))
}

async fn simulate(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: SimulateRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))?;
    if req.horizon == 0 || req.horizon > MAX_API_HORIZON {
        return Err(ApiError::bad_request(format!(
            "horizon must be between 1 and {MAX_API_HORIZON} days, got {}",
            req.horizon
        )));
    }
    let scenario = PolicyScenario {
        open_mask: OpenMask::from_bools(req.open_mask),
        start_date: req.start_date,
        horizon: req.horizon,
    };
    let _permit = state
        .permits
        .acquire()
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let s = state.clone();
    let sc = scenario.clone();
    let blm_scale = req.blm_scale;
    let (baseline, run) =
        tokio::task::spawn_blocking(move || scenario_trajectories(&s.bundle, &s.panel, &sc, blm_scale))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))??;
    let end = |t: &Trajectory| t.records.last().map(|r| (r.unemployment, r.cum_confirmed));
    let (Some((u0, c0)), Some((u1, c1))) = (end(&baseline), end(&run)) else {
        return Err(ApiError::internal("simulation produced no records"));
    };
    Ok(Json(json!({
        "schema_version": SCHEMA_VERSION,
        "panel_hash": state.panel_hash,
        "scenario": {
            "mask": scenario.open_mask,
            "label": scenario.open_mask.to_string(),
            "open_mask": req.open_mask,
            "start_date": req.start_date,
            "horizon": req.horizon,
            "blm_scale": req.blm_scale,
        },
        "outcome": { "d_employment_pp": u0 - u1, "d_cases": c1 - c0 },
        "baseline": baseline.records,
        "trajectory": run.records,
    })))
}

/// Loads the bundle and panel, then serves until interrupted.
pub fn serve_blocking(common: &Common, config: &RunConfig) -> anyhow::Result<()> {
    let (panel, _) = load_inputs(common)?;
    let bundle = load_bundle(common)?;
    let (start, end) = policy_window(&panel, common, config);
    let window = FrontierWindow {
        start,
        end,
        horizon: config.policy.horizon,
    };
    let state = Arc::new(AppState::new(bundle, panel, window, config.serve.workers)?);
    let bind = config.serve.bind.clone();
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting async runtime")?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind)
            .await
            .with_context(|| format!("binding {bind}"))?;
        log::info!("listening on {}", listener.local_addr()?);
        println!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(state)).await.context("serving")
    })
}
