//! HTTP API over one immutable trajectory store.
//!
//! Queries run on blocking threads behind a fair semaphore, so at most
//! `workers` execute at once and waiting requests are admitted in arrival
//! order.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use trajis_core::attribute::{AttributeKind, Scope};
use trajis_core::engine::{InvalidQuery, LabeledError, QueryLabel};
use trajis_core::query::Violation;
use trajis_core::{compare, execute, parse, Attribute, QueryGraph, SankeyResult, TrajectoryStore};

/// Version of the request and response schemas described in the API docs.
pub const API_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    BadQuery,
    ValidationFailed,
    StoreUnavailable,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::BadQuery => StatusCode::BAD_REQUEST,
            ErrorCode::ValidationFailed => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::StoreUnavailable => StatusCode::SERVICE_UNAVAILABLE,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiViolation {
    /// `A` or `B` for compare requests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<QueryLabel>,
    pub message: String,
    pub violation: Violation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<ApiViolation>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into(), violations: Vec::new() }
    }

    fn invalid(errors: &[(Option<QueryLabel>, &InvalidQuery)]) -> Self {
        let violations: Vec<ApiViolation> = errors
            .iter()
            .flat_map(|(label, e)| {
                e.0.iter().map(move |v| ApiViolation { query: *label, message: v.to_string(), violation: v.clone() })
            })
            .collect();
        let message = match errors {
            [(None, _)] => "query is invalid".to_string(),
            _ => {
                let labels: Vec<String> = errors.iter().filter_map(|(l, _)| l.map(|l| l.to_string())).collect();
                format!("query {} is invalid", labels.join(" and "))
            }
        };
        Self { code: ErrorCode::ValidationFailed, message, violations }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<TrajectoryStore>,
    permits: Arc<Semaphore>,
}

impl AppState {
    pub fn new(store: Arc<TrajectoryStore>, workers: usize) -> Self {
        Self { store, permits: Arc::new(Semaphore::new(workers.max(1))) }
    }

    async fn run<T: Send + 'static>(
        &self,
        job: impl FnOnce(&TrajectoryStore) -> T + Send + 'static,
    ) -> Result<T, ApiError> {
        let _permit = self
            .permits
            .clone()
            .acquire_owned()
            .await
            .map_err(|_| ApiError::new(ErrorCode::StoreUnavailable, "service is shutting down"))?;
        let store = self.store.clone();
        tokio::task::spawn_blocking(move || job(&store)).await.map_err(|e| {
            tracing::error!(error = %e, "query task failed");
            ApiError::new(ErrorCode::Internal, "query execution failed")
        })
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/schema", get(schema))
        .route("/api/stats", get(stats))
        .route("/api/query", post(query))
        .route("/api/compare", post(compare_queries))
        .with_state(state)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub name: String,
    pub kind: AttributeKind,
    pub scope: Scope,
    /// Distinct values in the store, sorted; categorical attributes only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Schema {
    pub version: u32,
    pub attributes: Vec<AttributeSchema>,
}

pub fn store_schema(store: &TrajectoryStore) -> Schema {
    let attributes = Attribute::ALL
        .iter()
        .map(|&a| AttributeSchema {
            name: a.name().to_string(),
            kind: a.kind(),
            scope: a.scope(),
            values: store
                .dictionaries()
                .get(a)
                .map(|d| d.sorted_values().into_iter().map(str::to_string).collect()),
        })
        .collect();
    Schema { version: API_VERSION, attributes }
}

async fn schema(State(state): State<AppState>) -> Json<Schema> {
    Json(store_schema(&state.store))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Stats {
    pub version: u32,
    pub entities: usize,
    pub events: usize,
    pub edges: usize,
    pub max_events_per_entity: usize,
    pub hop_cap: String,
}

async fn stats(State(state): State<AppState>) -> Json<Stats> {
    let s = state.store.stats();
    Json(Stats {
        version: API_VERSION,
        entities: s.entities,
        events: s.events,
        edges: s.edges,
        max_events_per_entity: s.max_events_per_entity,
        hop_cap: state.store.hop_cap().to_string(),
    })
}

/// A query as structured wire form or as DSL text.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum QueryInput {
    Graph(QueryGraph),
    Dsl(String),
}

impl QueryInput {
    fn into_graph(self, label: Option<QueryLabel>) -> Result<QueryGraph, ApiError> {
        match self {
            QueryInput::Graph(q) => Ok(q),
            QueryInput::Dsl(text) => parse(&text).map_err(|e| {
                let prefix = label.map(|l| format!("query {l}: ")).unwrap_or_default();
                ApiError::new(ErrorCode::BadQuery, format!("{prefix}{e}"))
            }),
        }
    }
}

fn is_dsl(headers: &HeaderMap) -> bool {
    let Some(ct) = headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok()) else { return false };
    let mime = ct.split(';').next().unwrap_or("").trim().to_ascii_lowercase();
    mime == "text/dsl" || mime == "text/plain"
}

fn sankey_response(result: &SankeyResult) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], result.to_json()).into_response()
}

fn json_error(e: serde_json::Error) -> ApiError {
    ApiError::new(ErrorCode::BadQuery, format!("malformed request body: {e}"))
}

async fn query(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let q = if is_dsl(&headers) {
        let text = std::str::from_utf8(&body).map_err(|_| ApiError::new(ErrorCode::BadQuery, "body is not UTF-8"))?;
        parse(text).map_err(|e| ApiError::new(ErrorCode::BadQuery, e.to_string()))?
    } else {
        serde_json::from_slice::<QueryInput>(&body).map_err(json_error)?.into_graph(None)?
    };
    let result = state.run(move |store| execute(store, &q)).await?;
    match result {
        Ok(r) => Ok(sankey_response(&r)),
        Err(e) => Err(ApiError::invalid(&[(None, &e)])),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareRequest {
    a: QueryInput,
    b: QueryInput,
}

/// Body of a successful compare response, built from the shared serialization
/// of each side.
pub fn comparison_json(a: &SankeyResult, b: &SankeyResult) -> String {
    format!("{{\"a\":{},\"b\":{}}}", a.to_json(), b.to_json())
}

async fn compare_queries(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: CompareRequest = serde_json::from_slice(&body).map_err(json_error)?;
    let qa = req.a.into_graph(Some(QueryLabel::A))?;
    let qb = req.b.into_graph(Some(QueryLabel::B))?;
    let c = state.run(move |store| compare(store, &qa, &qb)).await?;
    match (c.a, c.b) {
        (Ok(a), Ok(b)) => Ok(([(header::CONTENT_TYPE, "application/json")], comparison_json(&a, &b)).into_response()),
        (a, b) => {
            let errors: Vec<LabeledError> = [a.err(), b.err()].into_iter().flatten().collect();
            let refs: Vec<(Option<QueryLabel>, &InvalidQuery)> =
                errors.iter().map(|e| (Some(e.label), &e.error)).collect();
            Err(ApiError::invalid(&refs))
        }
    }
}

/// Serve until ctrl-c; in-flight requests complete before returning.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await
}
