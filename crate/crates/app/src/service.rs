//! HTTP/JSON service over one analysis session.
//!
//! Reads share a lock; `POST /api/retune` is the only writer. A retune
//! recomputes findings before the write lock is released, so readers see
//! either the old generation or the new one.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::RwLock;
use tower_http::services::ServeDir;

use netsig_core::detectors::Finding;
use netsig_core::properties::PropertyId;
use netsig_core::retune::{RetuneAction, RetuneError, RetuneOp};
use netsig_core::severity::RankMode;
use netsig_core::signatures::{signature_report, SignatureId};

use crate::state::{AppError, Session};

pub const DEFAULT_LIMIT: usize = 100;
pub const MAX_LIMIT: usize = 10_000;

pub struct AppState {
    pub session: RwLock<Session>,
    /// Where accepted retunes are persisted. `None` keeps state in memory.
    pub state_dir: Option<PathBuf>,
}

pub type Shared = Arc<AppState>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message, "status": self.status.as_u16() }))).into_response()
    }
}

impl From<AppError> for ApiError {
    fn from(e: AppError) -> Self {
        let status = match &e {
            AppError::Retune(RetuneError::StaleGeneration { .. }) => StatusCode::CONFLICT,
            AppError::Retune(RetuneError::UnknownSignature(_)) => StatusCode::NOT_FOUND,
            AppError::Retune(_) | AppError::NotRetunable(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: Shared, assets: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/generation", get(generation))
        .route("/api/signatures", get(signatures))
        .route("/api/signatures/{id}", get(signature_detail))
        .route("/api/findings", get(findings))
        .route("/api/findings/{*id}", get(finding_detail))
        .route("/api/retune", post(retune))
        .route("/api/retune/log", get(retune_log))
        .route("/api/sankey", get(sankey))
        .route("/api/metrics", get(metrics))
        .route("/api/{*rest}", get(api_not_found))
        .with_state(state);
    match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

async fn api_not_found(Path(rest): Path<String>) -> ApiError {
    ApiError::not_found(format!("no endpoint /api/{rest}"))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct GenerationBody {
    pub generation: u64,
    pub base_generation: u64,
    pub snapshot_id: String,
    pub detector: String,
    pub findings: usize,
    pub truth_loaded: bool,
}

async fn generation(State(st): State<Shared>) -> Json<GenerationBody> {
    let s = st.session.read().await;
    Json(GenerationBody {
        generation: s.generation(),
        base_generation: s.log.base_generation,
        snapshot_id: s.manifest.snapshot_id.clone(),
        detector: s.manifest.detector.method.to_string(),
        findings: s.findings.len(),
        truth_loaded: s.truth.is_some(),
    })
}

async fn signatures(State(st): State<Shared>) -> Json<Value> {
    let s = st.session.read().await;
    Json(json!({
        "generation": s.set.generation,
        "schema_version": s.set.schema_version,
        "params": s.set.params,
        "clusters": s.cluster_counts(),
        "unclustered": s.set.unclustered().len(),
        "warnings": s.set.warnings,
        "rows": signature_report(&s.set),
        "signatures": s.set.signatures,
    }))
}

fn parse_signature_id(raw: &str) -> Option<SignatureId> {
    raw.strip_prefix('S').unwrap_or(raw).parse().ok().map(SignatureId)
}

async fn signature_detail(State(st): State<Shared>, Path(raw): Path<String>) -> ApiResult<Value> {
    let id = parse_signature_id(&raw).ok_or_else(|| ApiError::bad_request(format!("`{raw}` is not a signature id")))?;
    let s = st.session.read().await;
    let sig = s.set.get(id).ok_or_else(|| ApiError::not_found(format!("unknown signature {id}")))?;
    let violations: Vec<&PropertyId> = s.findings.iter().filter(|f| f.violated_signature == Some(id)).map(|f| &f.property_id).collect();
    Ok(Json(json!({
        "generation": s.set.generation,
        "signature": sig,
        "members": s.set.members(id),
        "findings": violations,
    })))
}

#[derive(Debug, Deserialize)]
struct FindingsQuery {
    rank: Option<String>,
    offset: Option<String>,
    limit: Option<String>,
}

fn parse_usize(name: &str, raw: Option<&str>, default: usize) -> Result<usize, ApiError> {
    match raw {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| ApiError::bad_request(format!("`{name}` must be a non-negative integer, got `{v}`"))),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FindingsPage {
    pub generation: u64,
    pub rank: RankMode,
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub findings: Vec<Finding>,
}

async fn findings(State(st): State<Shared>, Query(q): Query<FindingsQuery>) -> ApiResult<FindingsPage> {
    let rank: RankMode = q.rank.as_deref().map(str::parse).transpose().map_err(ApiError::bad_request)?.unwrap_or_default();
    let offset = parse_usize("offset", q.offset.as_deref(), 0)?;
    let limit = parse_usize("limit", q.limit.as_deref(), DEFAULT_LIMIT)?;
    if limit > MAX_LIMIT {
        return Err(ApiError::bad_request(format!("`limit` may not exceed {MAX_LIMIT}")));
    }
    let s = st.session.read().await;
    let all = s.ranked(rank);
    let total = all.len();
    let findings = all.into_iter().skip(offset).take(limit).collect();
    Ok(Json(FindingsPage { generation: s.generation(), rank, total, offset, limit, findings }))
}

async fn finding_detail(State(st): State<Shared>, Path(raw): Path<String>) -> ApiResult<Value> {
    let id = PropertyId::from(raw.as_str());
    let s = st.session.read().await;
    let prop = s.bundle.property(&id).ok_or_else(|| ApiError::not_found(format!("unknown property `{raw}`")))?;
    let finding = s.findings.iter().find(|f| f.property_id == id);
    let stanza = s.bundle.snapshot.device(&prop.device).and_then(|d| d.stanza(prop.kind.stanza_kind(), &prop.name));
    let source_lines: Vec<&str> = stanza.map(|st| st.raw_text.lines().collect()).unwrap_or_default();
    let assigned = s.set.signature_of(&id);
    let blast_radius = s.bundle.graph.blast_radius(&id).ok();
    let dangling: Vec<_> = s.bundle.graph.dangling_from(&id).collect();
    Ok(Json(json!({
        "generation": s.generation(),
        "property_id": id,
        "finding": finding,
        "provenance": {
            "device": prop.device,
            "kind": prop.kind,
            "name": prop.name,
            "file": prop.source.file,
            "lines": prop.source.lines,
        },
        "source_lines": source_lines,
        "signature": assigned,
        "blast_radius": blast_radius,
        "references": prop.references,
        "dangling": dangling,
        "attributes": prop.attributes,
    })))
}

/// A retune action as posted by clients. Author and timestamp are optional.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetuneRequest {
    pub generation: u64,
    pub action: RetuneOp,
    #[serde(default)]
    pub author: Option<String>,
    #[serde(default)]
    pub timestamp: Option<DateTime<Utc>>,
    #[serde(default)]
    pub note: Option<String>,
}

impl RetuneRequest {
    pub fn into_action(self) -> RetuneAction {
        RetuneAction {
            generation: self.generation,
            action: self.action,
            author: self.author.unwrap_or_else(|| "api".into()),
            timestamp: self.timestamp.unwrap_or_else(Utc::now),
            note: self.note,
        }
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct RetuneResponse {
    pub generation: u64,
    pub findings: usize,
}

async fn retune(State(st): State<Shared>, body: Bytes) -> ApiResult<RetuneResponse> {
    let req: RetuneRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("malformed retune action: {e}")))?;
    let action = req.into_action();
    let mut s = st.session.write().await;
    s.apply(action)?;
    if let Some(dir) = &st.state_dir {
        if let Err(e) = s.save(dir) {
            log::error!("retune applied in memory but not persisted: {e}");
            return Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("retune applied but not persisted: {e}")));
        }
    }
    log::info!("retune accepted, generation now {}", s.generation());
    Ok(Json(RetuneResponse { generation: s.generation(), findings: s.findings.len() }))
}

async fn retune_log(State(st): State<Shared>) -> Json<Value> {
    let s = st.session.read().await;
    Json(json!({ "base_generation": s.log.base_generation, "generation": s.generation(), "actions": s.log.actions }))
}

async fn sankey(State(st): State<Shared>) -> Json<Value> {
    let s = st.session.read().await;
    let sk = s.sankey();
    Json(json!({ "generation": s.generation(), "nodes": sk.nodes, "links": sk.links }))
}

async fn metrics(State(st): State<Shared>) -> ApiResult<Value> {
    let s = st.session.read().await;
    let m = s.metrics().ok_or_else(|| ApiError::not_found("no ground-truth file loaded"))?;
    Ok(Json(json!({ "generation": s.generation(), "metrics": m, "clusters": s.cluster_counts() })))
}

pub async fn serve(state: Shared, assets: Option<PathBuf>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, assets)).await
}
