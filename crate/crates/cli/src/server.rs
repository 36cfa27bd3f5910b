//! HTTP/JSON front end over a [`MaterialRegistry`].

use std::sync::Arc;

use appearance_core::service::slice_image;
use appearance_core::{Attribute, EditRequest, EditResponse, Error, MaterialInfo, MaterialRegistry};
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SLICE_RESOLUTION: usize = 128;
pub const MAX_SLICE_RESOLUTION: usize = 512;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, message: message.into() }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Argument(_) | Error::Schema(_) | Error::Domain(_) | Error::Compatibility { .. } => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError { status, message: e.to_string() }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            log::error!("{}", self.message);
        }
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

pub fn router(registry: Arc<MaterialRegistry>) -> Router {
    Router::new()
        .route("/materials", get(list_materials))
        .route("/materials/{id}", get(material))
        .route("/materials/{id}/preview.png", get(preview))
        .route("/edit", post(edit))
        .route("/slice", get(slice))
        .route("/attributes", get(attributes))
        .with_state(registry)
}

/// Runs CPU-bound registry work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> appearance_core::Result<T> + Send + 'static) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, message: format!("worker failed: {e}") }),
    }
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn list_materials(State(reg): State<Arc<MaterialRegistry>>) -> Json<Vec<MaterialInfo>> {
    Json(reg.list())
}

async fn material(State(reg): State<Arc<MaterialRegistry>>, Path(id): Path<String>) -> ApiResult<Json<MaterialInfo>> {
    Ok(Json(reg.info(&id)?))
}

async fn preview(State(reg): State<Arc<MaterialRegistry>>, Path(id): Path<String>) -> ApiResult<Response> {
    let bytes = blocking(move || reg.preview_png(&id)).await?;
    Ok(png(bytes.as_ref().clone()))
}

async fn edit(
    State(reg): State<Arc<MaterialRegistry>>,
    body: std::result::Result<Json<EditRequest>, JsonRejection>,
) -> ApiResult<Json<EditResponse>> {
    let Json(req) = body?;
    Ok(Json(blocking(move || reg.handle_edit_request(&req)).await?))
}

#[derive(Debug, Deserialize)]
pub struct SliceQuery {
    pub attr: String,
    /// 1-based coefficient indices.
    pub i: usize,
    pub j: usize,
    /// Five comma-separated values; entries at `i` and `j` are ignored.
    pub fixed: Option<String>,
    pub resolution: Option<usize>,
}

pub fn parse_fixed(s: &str) -> std::result::Result<[f64; 5], String> {
    let values: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad coefficient {v:?}")))
        .collect::<std::result::Result<_, _>>()?;
    let values: [f64; 5] = values.try_into().map_err(|v: Vec<f64>| format!("expected 5 coefficients, got {}", v.len()))?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err("coefficients must be finite".into());
    }
    Ok(values)
}

async fn slice(
    State(reg): State<Arc<MaterialRegistry>>,
    query: std::result::Result<Query<SliceQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(q) = query?;
    let attr: Attribute = q.attr.parse()?;
    if q.i == 0 || q.j == 0 {
        return Err(ApiError::bad_request("i and j are 1-based"));
    }
    let fixed = q.fixed.as_deref().map(parse_fixed).transpose().map_err(ApiError::bad_request)?;
    let resolution = q.resolution.unwrap_or(DEFAULT_SLICE_RESOLUTION);
    if resolution > MAX_SLICE_RESOLUTION {
        return Err(ApiError::bad_request(format!("resolution is capped at {MAX_SLICE_RESOLUTION}")));
    }
    let bytes = blocking(move || {
        let grid = reg.slice_grid(attr, q.i - 1, q.j - 1, fixed, resolution)?;
        appearance_core::preview::encode_png(&slice_image(&grid))
    })
    .await?;
    Ok(png(bytes))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct AttributeEntry {
    pub index: usize,
    pub name: String,
    pub slug: String,
}

async fn attributes() -> Json<Vec<AttributeEntry>> {
    Json(
        Attribute::ALL
            .iter()
            .map(|a| AttributeEntry { index: a.index(), name: a.name().to_string(), slug: a.slug() })
            .collect(),
    )
}
