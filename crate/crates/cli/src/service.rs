//! JSON over HTTP for a loaded [`Session`], under `/v1`.
//!
//! Bodies are the same pretty-printed documents the command line writes, so
//! a request and the matching CLI run produce identical bytes.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use prm_drift::io::to_json_pretty;
use prm_drift::scenario::ScenarioSpec;
use prm_drift::session::{ClusterQuery, Session};
use prm_drift::{Error, FieldError};
use serde::{Deserialize, Serialize};

pub enum ApiError {
    BadRequest(Vec<FieldError>),
    NotFound(String),
    Internal(String),
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::BadRequest(errors) => {
                (StatusCode::BAD_REQUEST, serde_json::json!({ "errors": errors }))
            }
            ApiError::NotFound(message) => {
                (StatusCode::NOT_FOUND, serde_json::json!({ "error": message }))
            }
            ApiError::Internal(detail) => {
                let id = uuid::Uuid::new_v4().to_string();
                log::error!("request {id} failed: {detail}");
                (
                    StatusCode::INTERNAL_SERVER_ERROR,
                    serde_json::json!({ "error": "internal error", "id": id }),
                )
            }
        };
        json_response(status, to_json_pretty(&body).unwrap_or_default())
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Scenario(fields) => ApiError::BadRequest(fields),
            Error::Config(m) | Error::Structure(m) | Error::Domain(m) | Error::Size(m) => {
                ApiError::BadRequest(vec![FieldError {
                    field: "request".into(),
                    message: m,
                }])
            }
            other => ApiError::Internal(other.to_string()),
        }
    }
}

fn bad(field: &str, message: impl Into<String>) -> ApiError {
    ApiError::BadRequest(vec![FieldError {
        field: field.into(),
        message: message.into(),
    }])
}

type ApiResult = Result<Response, ApiError>;

fn ok<T: Serialize>(value: &T) -> ApiResult {
    let body = to_json_pretty(value).map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(json_response(StatusCode::OK, body))
}

/// Comma-separated reals.
pub fn parse_cuts(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|c| {
            c.trim()
                .parse::<f64>()
                .map_err(|_| format!("{c:?} is not a number"))
        })
        .collect()
}

#[derive(Debug, Default, Deserialize)]
pub struct BandQuery {
    pub variable: Option<String>,
    pub cuts: Option<String>,
}

impl BandQuery {
    fn cuts(&self) -> Result<Option<Vec<f64>>, ApiError> {
        self.cuts
            .as_deref()
            .map(|c| parse_cuts(c).map_err(|m| bad("cuts", m)))
            .transpose()
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct ClusterParams {
    pub min_support: Option<f64>,
    pub max_size: Option<usize>,
    pub gap_threshold: Option<f64>,
}

fn query<T>(q: Result<Query<T>, axum::extract::rejection::QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(v)| v).map_err(|e| bad("query", e.body_text()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn health() -> ApiResult {
    ok(&serde_json::json!({ "status": "ok" }))
}

async fn model(State(s): State<Arc<Session>>) -> ApiResult {
    ok(&s.model_view()?)
}

async fn bands(
    State(s): State<Arc<Session>>,
    q: Result<Query<BandQuery>, axum::extract::rejection::QueryRejection>,
) -> ApiResult {
    let q = query(q)?;
    let cuts = q.cuts()?;
    let report = blocking(move || Ok(s.bands(q.variable.as_deref(), cuts.as_deref())?)).await?;
    ok(&report)
}

async fn clusters(
    State(s): State<Arc<Session>>,
    q: Result<Query<ClusterParams>, axum::extract::rejection::QueryRejection>,
) -> ApiResult {
    let q = query(q)?;
    let d = ClusterQuery::default();
    let cq = ClusterQuery {
        min_support: q.min_support.unwrap_or(d.min_support),
        max_size: q.max_size.unwrap_or(d.max_size),
        gap_threshold: q.gap_threshold.unwrap_or(d.gap_threshold),
    };
    let list = blocking(move || Ok(s.clusters(&cq)?)).await?;
    ok(&list)
}

async fn explain(State(s): State<Arc<Session>>, Path(record_id): Path<String>) -> ApiResult {
    match s.explain(&record_id)? {
        Some(e) => ok(&e),
        None => Err(ApiError::NotFound(format!("unknown record {record_id}"))),
    }
}

async fn scenario(
    State(s): State<Arc<Session>>,
    q: Result<Query<BandQuery>, axum::extract::rejection::QueryRejection>,
    body: Bytes,
) -> ApiResult {
    let q = query(q)?;
    let cuts = q.cuts()?;
    let text = std::str::from_utf8(&body).map_err(|_| bad("body", "request body is not UTF-8"))?;
    let spec = ScenarioSpec::from_json(text)?;
    let report = blocking(move || Ok(s.scenario(&spec, q.variable.as_deref(), cuts.as_deref())?)).await?;
    ok(&report)
}

pub fn router(session: Arc<Session>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/model", get(model))
        .route("/v1/bands", get(bands))
        .route("/v1/clusters", get(clusters))
        .route("/v1/explain/{record_id}", get(explain))
        .route("/v1/scenario", post(scenario))
        .with_state(session)
}

/// Serves until interrupted.
pub async fn serve(session: Session, bind: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(session)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
