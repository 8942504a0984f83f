//! HTTP API over the ingest service and analytics.

use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use tokio::net::TcpListener;

use crate::analytics::{self, AnalyticsError, AnalyticsFilter, DEFAULT_PAGE, MAX_PAGE};
use crate::store::{IngestService, ScanFilter, StoreError};

/// Largest accepted upload body.
pub const MAX_BODY: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct AppState {
    pub ingest: IngestService,
    /// Configured zone names, in load order.
    pub zones: Vec<String>,
    /// When set, every request must carry `Authorization: Bearer <token>`.
    pub token: Option<String>,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
}

struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: u16, error: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR),
            body: ErrorBody { error, message: message.into() },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        match e {
            AnalyticsError::Cursor(e) => e.into(),
            e => ApiError::new(400, "bad_request", e.to_string()),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::BadCursor(_) => ApiError::new(400, "bad_cursor", e.to_string()),
            e => ApiError::new(500, "storage_error", e.to_string()),
        }
    }
}

type Params = Query<Vec<(String, String)>>;

fn param<'a>(params: &'a [(String, String)], name: &str) -> Option<&'a str> {
    params.iter().rev().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
}

fn limit(params: &[(String, String)]) -> Result<usize, ApiError> {
    match param(params, "limit") {
        None => Ok(DEFAULT_PAGE),
        Some(v) => match v.parse::<usize>() {
            Ok(n) if (1..=MAX_PAGE).contains(&n) => Ok(n),
            _ => Err(ApiError::new(400, "bad_request", format!("limit must be in 1..={MAX_PAGE}"))),
        },
    }
}

async fn post_trace(State(st): State<Arc<AppState>>, body: Bytes) -> Response {
    let ingest = st.ingest.clone();
    let result = tokio::task::spawn_blocking(move || ingest.ingest_bytes(&body)).await;
    match result {
        Ok(Ok(accepted)) => Json(accepted).into_response(),
        Ok(Err(e)) => ApiError::new(e.http_status(), e.reason(), e.to_string()).into_response(),
        Err(e) => ApiError::new(500, "internal_error", e.to_string()).into_response(),
    }
}

async fn get_records(State(st): State<Arc<AppState>>, Query(params): Params) -> Result<Response, ApiError> {
    let date = |name: &str| -> Result<_, ApiError> {
        param(&params, name)
            .map(|v| {
                chrono::NaiveDate::parse_from_str(v, "%Y-%m-%d")
                    .map_err(|_| ApiError::new(400, "bad_request", format!("{name}: expected YYYY-MM-DD")))
            })
            .transpose()
    };
    let filter = ScanFilter {
        from: date("from")?,
        to: date("to")?,
        pseudonym: param(&params, "pseudonym").map(str::to_owned),
        zone: param(&params, "zone").map(str::to_owned),
    };
    let page = st.ingest.store.scan(&filter, param(&params, "cursor"), limit(&params)?)?;
    Ok(Json(page).into_response())
}

fn filter(params: &[(String, String)], extra: &[&str]) -> Result<AnalyticsFilter, ApiError> {
    Ok(AnalyticsFilter::from_query(params, extra)?)
}

async fn modal_split(State(st): State<Arc<AppState>>, Query(params): Params) -> Result<Response, ApiError> {
    let f = filter(&params, &[])?;
    Ok(Json(analytics::modal_split(&st.ingest.store.records(), &f)).into_response())
}

async fn carbon(State(st): State<Arc<AppState>>, Query(params): Params) -> Result<Response, ApiError> {
    let f = filter(&params, &[])?;
    Ok(Json(analytics::carbon_total(&st.ingest.store.records(), &f)).into_response())
}

/// `zones` names the matrix axes here rather than filtering trips.
async fn od(State(st): State<Arc<AppState>>, Query(params): Params) -> Result<Response, ApiError> {
    let axis_params: Vec<(String, String)> = params.iter().filter(|(k, _)| k != "zones").cloned().collect();
    let f = filter(&axis_params, &[])?;
    let zones: Vec<String> = match param(&params, "zones") {
        None => st.zones.clone(),
        Some(list) => list.split(',').map(str::trim).filter(|z| !z.is_empty()).map(str::to_owned).collect(),
    };
    if let Some(z) = zones.iter().find(|z| !st.zones.contains(z)) {
        return Err(ApiError::new(400, "bad_request", format!("unknown zone {z:?}")));
    }
    Ok(Json(analytics::od_matrix(&st.ingest.store.records(), &zones, &f)).into_response())
}

async fn trips(State(st): State<Arc<AppState>>, Query(params): Params) -> Result<Response, ApiError> {
    let f = filter(&params, &["cursor", "limit"])?;
    let page = analytics::trips(&st.ingest.store.records(), &f, param(&params, "cursor"), limit(&params)?)?;
    Ok(Json(page).into_response())
}

async fn routes(State(st): State<Arc<AppState>>, Query(params): Params) -> Result<Response, ApiError> {
    let f = filter(&params, &["min_support"])?;
    let min_support = match param(&params, "min_support") {
        None => 2,
        Some(v) => v
            .parse()
            .map_err(|_| ApiError::new(400, "bad_request", "min_support must be a positive integer"))?,
    };
    Ok(Json(analytics::routes(&st.ingest.store.records(), &f, min_support)).into_response())
}

async fn require_token(State(st): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &st.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return ApiError::new(401, "unauthorized", "missing or wrong bearer token").into_response();
        }
    }
    next.run(req).await
}

pub fn router(state: AppState) -> Router {
    let state = Arc::new(state);
    Router::new()
        .route("/v1/traces", post(post_trace))
        .route("/v1/records", get(get_records))
        .route("/v1/analytics/modal-split", get(modal_split))
        .route("/v1/analytics/od", get(od))
        .route("/v1/analytics/carbon", get(carbon))
        .route("/v1/analytics/trips", get(trips))
        .route("/v1/analytics/routes", get(routes))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .layer(DefaultBodyLimit::max(MAX_BODY))
        .with_state(state)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
