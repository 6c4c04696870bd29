//! JSON API over a [`ReviewStore`]: list the review queue, inspect one
//! example with its detector boxes and votes, and submit decisions.
//!
//! Routes:
//! - `GET  /api/examples?status=&page=&page_size=`
//! - `GET  /api/examples/{id}`
//! - `GET  /api/examples/{id}/image?boxes=1`
//! - `POST /api/examples/{id}/decision`

use std::collections::HashMap;
use std::io::Cursor;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use rwt_core::datamodel::{ImageTensor, ManifestRecord, VoteRecord};
use rwt_core::scoremap::{detector_boxes, ScoreMapSource, TextBox};
use rwt_core::vetting::{status_of, ReviewAction, ReviewDecision, ReviewStatus, ReviewStore};
use rwt_core::Error;

/// Region threshold used for the display boxes.
pub const BOX_THRESHOLD: f32 = 0.8;
pub const DEFAULT_PAGE_SIZE: usize = 20;
pub const REVIEWER_HEADER: &str = "x-reviewer";

#[derive(Clone)]
pub struct AppState {
    store: Arc<Mutex<ReviewStore>>,
    images_root: PathBuf,
    maps: Option<Arc<dyn ScoreMapSource + Send + Sync>>,
    votes: Arc<HashMap<String, Vec<VoteRecord>>>,
}

impl AppState {
    pub fn new(store: ReviewStore, images_root: impl Into<PathBuf>) -> Self {
        Self {
            store: Arc::new(Mutex::new(store)),
            images_root: images_root.into(),
            maps: None,
            votes: Arc::new(HashMap::new()),
        }
    }

    pub fn with_maps(mut self, maps: impl ScoreMapSource + Send + Sync + 'static) -> Self {
        self.maps = Some(Arc::new(maps));
        self
    }

    pub fn with_votes(mut self, votes: Vec<VoteRecord>) -> Self {
        let mut by_id: HashMap<String, Vec<VoteRecord>> = HashMap::new();
        for v in votes {
            by_id.entry(v.image_id.clone()).or_default().push(v);
        }
        self.votes = Arc::new(by_id);
        self
    }

    fn store(&self) -> MutexGuard<'_, ReviewStore> {
        // A panic mid-request cannot leave the store half-written: submit
        // mutates only after the log append succeeds.
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn bad_request(msg: impl std::fmt::Display) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            body: json!({ "error": msg.to_string() }),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownImage(_) => StatusCode::NOT_FOUND,
            Error::VersionConflict { .. } => StatusCode::CONFLICT,
            Error::InvalidDecision(_) | Error::InvalidValue(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{e}");
        }
        Self {
            status,
            body: json!({ "error": e.to_string() }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Deserialize)]
pub struct ListQuery {
    pub status: Option<String>,
    pub page: Option<usize>,
    pub page_size: Option<usize>,
}

async fn list_examples(State(state): State<AppState>, Query(q): Query<ListQuery>) -> ApiResult<Json<serde_json::Value>> {
    let status = match q.status.as_deref().filter(|s| !s.is_empty()) {
        Some(s) => Some(s.parse::<ReviewStatus>()?),
        None => None,
    };
    let page = state
        .store()
        .list(status, q.page.unwrap_or(1), q.page_size.unwrap_or(DEFAULT_PAGE_SIZE))?;
    Ok(Json(serde_json::to_value(page).map_err(|e| ApiError::from(Error::from(e)))?))
}

#[derive(Debug, Serialize)]
pub struct ExampleDetail {
    pub record: ManifestRecord,
    pub status: ReviewStatus,
    pub version: u64,
    pub current_label: Option<String>,
    pub image_url: String,
    pub boxes: Vec<TextBox>,
    /// `false` when no score map is available for this image.
    pub boxes_available: bool,
    pub votes: Vec<VoteRecord>,
}

fn boxes_for(state: &AppState, image_id: &str) -> ApiResult<Option<Vec<TextBox>>> {
    let Some(maps) = &state.maps else {
        return Ok(None);
    };
    match maps.score_map(image_id) {
        Ok(map) => Ok(Some(detector_boxes(&map, BOX_THRESHOLD))),
        Err(Error::MissingScoreMap(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

async fn get_example(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ExampleDetail>> {
    let record = state.store().get(&id)?.clone();
    let boxes = boxes_for(&state, &id)?;
    Ok(Json(ExampleDetail {
        status: status_of(&record),
        version: record.version,
        current_label: record.aggregated.as_ref().map(|a| a.label.to_string()),
        image_url: format!("/api/examples/{id}/image"),
        boxes_available: boxes.is_some(),
        boxes: boxes.unwrap_or_default(),
        votes: state.votes.get(&id).cloned().unwrap_or_default(),
        record,
    }))
}

#[derive(Debug, Deserialize)]
pub struct ImageQuery {
    pub boxes: Option<u8>,
}

fn outline(img: &mut image::RgbImage, b: &TextBox) {
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 || b.width == 0 || b.height == 0 {
        return;
    }
    let red = image::Rgb([255, 0, 0]);
    let (x0, y0) = (b.x.min(w - 1), b.y.min(h - 1));
    let (x1, y1) = ((b.x + b.width - 1).min(w - 1), (b.y + b.height - 1).min(h - 1));
    for x in x0..=x1 {
        img.put_pixel(x, y0, red);
        img.put_pixel(x, y1, red);
    }
    for y in y0..=y1 {
        img.put_pixel(x0, y, red);
        img.put_pixel(x1, y, red);
    }
}

async fn get_image(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ImageQuery>,
) -> ApiResult<Response> {
    let path = state.images_root.join(&state.store().get(&id)?.image_path);
    let mut rgb = ImageTensor::load(&path)?.to_rgb8();
    if q.boxes.unwrap_or(0) != 0 {
        for b in boxes_for(&state, &id)?.unwrap_or_default() {
            outline(&mut rgb, &b);
        }
    }
    let mut png = Vec::new();
    rgb.write_to(&mut Cursor::new(&mut png), image::ImageFormat::Png)
        .map_err(|e| ApiError::from(Error::from(e)))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

/// Request body; `image_id` and `reviewer` may come from the path and the
/// reviewer header instead.
#[derive(Debug, Deserialize)]
pub struct DecisionBody {
    pub image_id: Option<String>,
    #[serde(flatten)]
    pub action: ReviewAction,
    pub reviewer: Option<String>,
    pub timestamp_ms: Option<u64>,
    pub prior_version: u64,
}

async fn submit_decision(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(body): Json<DecisionBody>,
) -> ApiResult<Json<ManifestRecord>> {
    if body.image_id.as_deref().is_some_and(|b| b != id) {
        return Err(ApiError::bad_request("image_id in body differs from the path"));
    }
    let reviewer = body
        .reviewer
        .or_else(|| headers.get(REVIEWER_HEADER).and_then(|v| v.to_str().ok()).map(str::to_string))
        .unwrap_or_default();
    let timestamp_ms = body.timestamp_ms.unwrap_or_else(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    });
    let decision = ReviewDecision {
        image_id: id,
        action: body.action,
        reviewer,
        timestamp_ms,
        prior_version: body.prior_version,
    };
    let mut store = state.store();
    match store.submit(decision) {
        Ok(rec) => {
            log::info!("{} -> version {}", rec.image_id, rec.version);
            Ok(Json(rec))
        }
        Err(e @ Error::VersionConflict { .. }) => {
            // Hand back the current record so the reviewer can decide again.
            let current = store.get(match &e {
                Error::VersionConflict { image_id, .. } => image_id,
                _ => unreachable!(),
            })?;
            Err(ApiError {
                status: StatusCode::CONFLICT,
                body: json!({ "error": e.to_string(), "current": current }),
            })
        }
        Err(e) => Err(e.into()),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/examples", get(list_examples))
        .route("/api/examples/{id}", get(get_example))
        .route("/api/examples/{id}/image", get(get_image))
        .route("/api/examples/{id}/decision", post(submit_decision))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("vetting service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
