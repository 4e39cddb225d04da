use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::NaiveDate;
use epiecon_cli::serve::{router, AppState, FrontierWindow};
use epiecon_core::sim::synthetic::{generate_panel, ground_truth_bundle, SyntheticConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const NONE: [bool; 8] = [false; 8];
const ALL: [bool; 8] = [true; 8];

fn date(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

fn app() -> Router {
    let bundle = ground_truth_bundle(true);
    let (panel, _) = generate_panel(&bundle, &SyntheticConfig::default()).unwrap();
    let window = FrontierWindow {
        start: date("2020-06-01"),
        end: date("2020-06-03"),
        horizon: 14,
    };
    router(Arc::new(AppState::new(bundle, panel, window, 2).unwrap()))
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).expect("JSON body"))
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &Router, body: impl Into<Body>) -> (StatusCode, Value) {
    let req = Request::post("/api/simulate")
        .header("content-type", "application/json")
        .body(body.into())
        .unwrap();
    call(app, req).await
}

fn simulate_body(open: [bool; 8], horizon: usize) -> String {
    json!({ "open_mask": open, "start_date": "2020-06-01", "horizon": horizon, "blm_scale": 1.0 }).to_string()
}

#[tokio::test]
async fn panel_summary_is_versioned() {
    let app = app();
    let (status, body) = get(&app, "/api/panel").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["schema_version"], 1);
    assert_eq!(body["days"], 140);
    assert_eq!(body["start"], "2020-04-01");
}

#[tokio::test]
async fn empty_mask_gives_identical_trajectories() {
    let app = app();
    let (status, body) = post(&app, simulate_body([false; 8], 14)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["schema_version"], 1);
    assert_eq!(body["baseline"].as_array().unwrap().len(), 14);
    assert_eq!(body["baseline"], body["trajectory"]);
    assert_eq!(body["outcome"]["d_cases"], 0.0);
    assert_eq!(body["outcome"]["d_employment_pp"], 0.0);
}

#[tokio::test]
async fn opening_a_policy_changes_the_trajectory() {
    let app = app();
    let mut open = [false; 8];
    open[1] = true;
    let (status, body) = post(&app, simulate_body(open, 14)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["scenario"]["label"], "C2");
    assert_ne!(body["baseline"], body["trajectory"]);
    assert!(body["outcome"]["d_cases"].as_f64().unwrap() > 0.0);
}

#[tokio::test]
async fn zero_horizon_is_rejected() {
    let app = app();
    let (status, body) = post(&app, simulate_body([true; 8], 0)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["schema_version"], 1);
    assert_eq!(body["error"]["kind"], "bad_request");
}

#[tokio::test]
async fn malformed_bodies_are_rejected() {
    let app = app();
    for body in [
        "not json".to_string(),
        json!({ "open_mask": [true, false], "start_date": "2020-06-01", "horizon": 14 }).to_string(),
        json!({ "open_mask": NONE, "start_date": "June 1", "horizon": 14 }).to_string(),
        json!({ "open_mask": NONE, "start_date": "2020-06-01", "horizon": 14, "extra": 1 }).to_string(),
    ] {
        let (status, resp) = post(&app, body.clone()).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert!(resp["error"]["message"].is_string());
    }
}

#[tokio::test]
async fn start_date_outside_the_panel_is_rejected() {
    let app = app();
    let body = json!({ "open_mask": ALL, "start_date": "2019-01-01", "horizon": 14 }).to_string();
    let (status, resp) = post(&app, body).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(resp["error"]["kind"], "range");
}

#[tokio::test]
async fn negative_blm_scale_is_rejected() {
    let app = app();
    let body = json!({ "open_mask": ALL, "start_date": "2020-06-01", "horizon": 14, "blm_scale": -1.0 }).to_string();
    let (status, _) = post(&app, body).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn frontier_is_cached_and_deterministic() {
    let app = app();
    let (s1, first) = get(&app, "/api/frontier").await;
    let (s2, second) = get(&app, "/api/frontier").await;
    assert_eq!(s1, StatusCode::OK);
    assert_eq!(s2, StatusCode::OK);
    assert_eq!(first, second);
    assert_eq!(first["schema_version"], 1);
    let points = first["points"].as_array().unwrap();
    assert_eq!(points.len(), 255);
    let flagged = points.iter().filter(|p| p["on_frontier"] == true).count();
    assert_eq!(flagged, first["frontier"].as_array().unwrap().len());
    assert_eq!(app_frontier_of_fresh_state().await, first);
}

async fn app_frontier_of_fresh_state() -> Value {
    get(&app(), "/api/frontier").await.1
}

#[tokio::test]
async fn frontier_point_matches_simulate() {
    let app = app();
    let (_, frontier) = get(&app, "/api/frontier").await;
    let c2 = frontier["points"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["label"] == "C2")
        .unwrap()
        .clone();
    // The frontier averages over three start dates; simulate each and compare.
    let mut open = [false; 8];
    open[1] = true;
    let mut total = 0.0;
    for day in ["2020-06-01", "2020-06-02", "2020-06-03"] {
        let body = json!({ "open_mask": open, "start_date": day, "horizon": 14 }).to_string();
        let (_, resp) = post(&app, body).await;
        total += resp["outcome"]["d_cases"].as_f64().unwrap();
    }
    let expected = c2["d_cases"].as_f64().unwrap();
    assert!((total / 3.0 - expected).abs() <= 1e-9 * expected.abs().max(1.0));
}
