mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tokio::sync::RwLock;
use tower::ServiceExt;

use common::{analyzed, fixture, netsig, s, Fixture};
use netsig::service::{router, AppState, DEFAULT_LIMIT};
use netsig::state::{Session, FINDINGS_FILE, RETUNE_FILE};
use netsig_core::detectors::Finding;
use netsig_core::report::Sankey;

fn app(session: Session, state_dir: Option<std::path::PathBuf>) -> Router {
    router(Arc::new(AppState { session: RwLock::new(session), state_dir }), None)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or_else(Body::empty, Body::from)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = serde_json::from_slice(&bytes).unwrap_or_else(|_| panic!("non-JSON body for {uri}: {}", String::from_utf8_lossy(&bytes)));
    (status, v)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, "GET", uri, None).await
}

async fn post(app: &Router, body: Value) -> (StatusCode, Value) {
    call(app, "POST", "/api/retune", Some(body.to_string())).await
}

fn suppress(generation: u64, f: &Finding) -> Value {
    json!({
        "generation": generation,
        "action": {"type": "suppress_finding", "property": f.property_id, "signature": f.violated_signature.unwrap()},
        "author": "test",
    })
}

async fn all_findings(app: &Router) -> Vec<Finding> {
    let (_, v) = get(app, "/api/findings?limit=10000").await;
    serde_json::from_value(v["findings"].clone()).unwrap()
}

fn setup() -> (Fixture, Session) {
    let fx = fixture(20, 11);
    let session = analyzed(&fx);
    (fx, session)
}

#[tokio::test]
async fn generation_starts_at_base() {
    let (_fx, session) = setup();
    let app = app(session, None);
    let (st, v) = get(&app, "/api/generation").await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["generation"], 0);
    assert_eq!(v["base_generation"], 0);
    assert_eq!(v["truth_loaded"], true);
}

#[tokio::test]
async fn signatures_lists_rows_and_stats() {
    let (_fx, session) = setup();
    let n = session.set.signatures.len();
    let first = session.set.signatures[0].id;
    let app = app(session, None);
    let (st, v) = get(&app, "/api/signatures").await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["rows"].as_array().unwrap().len(), n);
    assert_eq!(v["signatures"].as_array().unwrap().len(), n);
    assert!(v["signatures"][0]["numeric_stats"].is_array());

    let (st, v) = get(&app, &format!("/api/signatures/{first}")).await;
    assert_eq!(st, StatusCode::OK);
    assert!(!v["members"].as_array().unwrap().is_empty());
    assert_eq!(get(&app, "/api/signatures/S99999").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/api/signatures/xyz").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn findings_paginate_and_rank() {
    let (_fx, session) = setup();
    let total = session.findings.len();
    let by_outlier = session.ranked(netsig_core::severity::RankMode::Outlier);
    let app = app(session, None);

    let (st, v) = get(&app, "/api/findings").await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["total"], total);
    assert_eq!(v["limit"], DEFAULT_LIMIT);
    assert_eq!(v["findings"].as_array().unwrap().len(), total.min(DEFAULT_LIMIT));

    let (_, v) = get(&app, "/api/findings?rank=outlier&offset=2&limit=3").await;
    let page: Vec<Finding> = serde_json::from_value(v["findings"].clone()).unwrap();
    assert_eq!(page, by_outlier[2..5]);

    let (st, v) = get(&app, &format!("/api/findings?offset={}", total + 10)).await;
    assert_eq!(st, StatusCode::OK);
    assert!(v["findings"].as_array().unwrap().is_empty());

    for bad in ["rank=loudest", "offset=-1", "limit=abc", "limit=100000"] {
        let (st, v) = get(&app, &format!("/api/findings?{bad}")).await;
        assert_eq!(st, StatusCode::BAD_REQUEST, "{bad}");
        assert!(v["error"].is_string());
    }
}

#[tokio::test]
async fn finding_detail_has_provenance_and_source() {
    let (_fx, session) = setup();
    let f = session.findings[0].clone();
    let app = app(session, None);
    let (st, v) = get(&app, &format!("/api/findings/{}", f.property_id)).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["finding"]["property_id"], json!(f.property_id));
    assert!(v["provenance"]["file"].as_str().unwrap().ends_with(".cfg"));
    let lines = v["source_lines"].as_array().unwrap();
    assert!(!lines.is_empty());
    assert!(lines[0].as_str().unwrap().contains(f.property_id.as_str().rsplit('/').next().unwrap()));
    assert!(!v["finding"]["deviant_features"].as_array().unwrap().is_empty() || f.deviant_features.is_empty());

    let (st, _) = get(&app, "/api/findings/r999/acl/NOPE").await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn suppress_removes_finding_and_bumps_generation() {
    let (fx, session) = setup();
    let f = session.findings.iter().find(|f| f.violated_signature.is_some()).unwrap().clone();
    let before = session.findings.len();
    let st_dir = fx.path("state");
    session.save(&st_dir).unwrap();
    let app = app(session, Some(st_dir.clone()));

    let (st, v) = post(&app, suppress(0, &f)).await;
    assert_eq!(st, StatusCode::OK, "{v}");
    assert_eq!(v["generation"], 1);
    assert_eq!(get(&app, "/api/generation").await.1["generation"], 1);
    let now = all_findings(&app).await;
    assert_eq!(now.len(), before - 1);
    assert!(now.iter().all(|g| g.property_id != f.property_id));

    // persisted
    let reloaded = Session::load(&st_dir).unwrap();
    assert_eq!(reloaded.generation(), 1);
    assert_eq!(reloaded.findings, now);
    assert!(std::fs::read_to_string(st_dir.join(RETUNE_FILE)).unwrap().contains("suppress_finding"));
}

#[tokio::test]
async fn retune_errors_map_to_status_codes() {
    let (_fx, session) = setup();
    let f = session.findings.iter().find(|f| f.violated_signature.is_some()).unwrap().clone();
    let sig = f.violated_signature.unwrap();
    let app = app(session, None);

    assert_eq!(post(&app, suppress(5, &f)).await.0, StatusCode::CONFLICT);
    let unknown = json!({"generation": 0, "action": {"type": "adjust_threshold", "signature": 99999, "threshold": 2.0}});
    assert_eq!(post(&app, unknown).await.0, StatusCode::NOT_FOUND);
    let bad_threshold = json!({"generation": 0, "action": {"type": "adjust_threshold", "signature": sig, "threshold": -1.0}});
    assert_eq!(post(&app, bad_threshold).await.0, StatusCode::BAD_REQUEST);
    for raw in ["{", "{}", r#"{"generation":0,"action":{"type":"explode"}}"#, r#"{"generation":"zero","action":{}}"#] {
        let (st, v) = call(&app, "POST", "/api/retune", Some(raw.into())).await;
        assert_eq!(st, StatusCode::BAD_REQUEST, "{raw}");
        assert!(v["error"].as_str().unwrap().contains("malformed"));
    }
    // nothing was applied
    assert_eq!(get(&app, "/api/generation").await.1["generation"], 0);
}

#[tokio::test]
async fn gets_do_not_change_state() {
    let (_fx, session) = setup();
    let app = app(session, None);
    let first = all_findings(&app).await;
    for uri in ["/api/signatures", "/api/sankey", "/api/metrics", "/api/generation", "/api/findings?rank=outlier", "/api/retune/log"] {
        assert_eq!(get(&app, uri).await.0, StatusCode::OK, "{uri}");
    }
    assert_eq!(all_findings(&app).await, first);
    assert_eq!(get(&app, "/api/generation").await.1["generation"], 0);
}

#[tokio::test]
async fn sankey_and_metrics() {
    let (_fx, session) = setup();
    let labeled = session.labeled_findings().len();
    let expected_metrics = serde_json::to_value(session.metrics().unwrap()).unwrap();
    let app = app(session, None);
    let (_, v) = get(&app, "/api/sankey").await;
    let sk: Sankey = serde_json::from_value(json!({"nodes": v["nodes"], "links": v["links"]})).unwrap();
    assert_eq!(sk.layer_totals(), [labeled; 3]);
    let (st, v) = get(&app, "/api/metrics").await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["metrics"], expected_metrics);
}

#[tokio::test]
async fn metrics_404_without_truth() {
    let fx = fixture(10, 2);
    let session = Session::analyze(&fx.snapshot, Default::default()).unwrap();
    let app = app(session, None);
    assert_eq!(get(&app, "/api/metrics").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/api/nothing-here").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_posts_against_one_generation() {
    let (_fx, session) = setup();
    let mut flagged = session.findings.iter().filter(|f| f.violated_signature.is_some());
    let (a, b) = (flagged.next().unwrap().clone(), flagged.next().unwrap().clone());
    let app = app(session, None);
    let (x, y) = tokio::join!(
        tokio::spawn({
            let app = app.clone();
            async move { post(&app, suppress(0, &a)).await.0 }
        }),
        tokio::spawn({
            let app = app.clone();
            async move { post(&app, suppress(0, &b)).await.0 }
        })
    );
    let mut codes = [x.unwrap(), y.unwrap()];
    codes.sort();
    assert_eq!(codes, [StatusCode::OK, StatusCode::CONFLICT]);
    assert_eq!(get(&app, "/api/generation").await.1["generation"], 1);
}

#[tokio::test]
async fn served_actions_replayed_by_cli_match_served_findings() {
    let (fx, session) = setup();
    let flagged: Vec<Finding> = session.findings.iter().filter(|f| f.violated_signature.is_some()).take(3).cloned().collect();
    let sig = flagged[0].violated_signature.unwrap();
    let cli_state = fx.path("cli-state");
    session.save(&cli_state).unwrap();
    let app = app(session, None);

    for (g, f) in flagged.iter().enumerate() {
        assert_eq!(post(&app, suppress(g as u64, f)).await.0, StatusCode::OK);
    }
    let thr = json!({"generation": 3, "action": {"type": "adjust_threshold", "signature": sig, "threshold": 5.0}});
    assert_eq!(post(&app, thr).await.0, StatusCode::OK);

    let (_, log) = get(&app, "/api/retune/log").await;
    let mut jsonl = json!({"base_generation": log["base_generation"]}).to_string() + "\n";
    for a in log["actions"].as_array().unwrap() {
        jsonl += &(a.to_string() + "\n");
    }
    let log_path = fx.path("served.jsonl");
    std::fs::write(&log_path, jsonl).unwrap();
    assert_eq!(netsig(&["retune", "apply", "--log", s(&log_path), "--state", s(&cli_state)]), 0);

    let served = all_findings(&app).await;
    let on_disk: Vec<Finding> = std::fs::read_to_string(cli_state.join(FINDINGS_FILE))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(served, on_disk);
    let (_, sigs) = get(&app, "/api/signatures").await;
    assert_eq!(sigs["signatures"], serde_json::to_value(&Session::load(&cli_state).unwrap().set.signatures).unwrap());
}
