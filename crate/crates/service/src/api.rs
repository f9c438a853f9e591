//! Route handlers.

use std::sync::Arc;

use axum::extract::multipart::Multipart;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use ceph_core::image_io::{self, detect_format};
use ceph_core::reporting::{self, encode_png, render_overlay, to_csv_string};
use ceph_core::{CephReport, Pipeline};
use chrono::Utc;
use serde::Deserialize;
use serde_json::json;

use crate::error::ApiError;
use crate::store::{CaseSlot, CaseState, CaseStatus, Store};

/// Largest accepted request body.
pub const MAX_UPLOAD_BYTES: usize = 64 * 1024 * 1024;

const ACTOR: &str = "reviewer";

pub struct AppState {
    pub pipeline: Pipeline,
    pub store: Store,
}

type Shared = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/cases", post(create_case))
        .route("/cases/{id}", get(get_case))
        .route("/cases/{id}/decode", post(decode_case))
        .route("/cases/{id}/landmarks", get(get_landmarks))
        .route("/cases/{id}/landmarks/{lid}", put(correct_landmark))
        .route("/cases/{id}/report", get(get_report))
        .route("/cases/{id}/overlay.png", get(get_overlay))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state)
}

/// Runs blocking work (disk, pipeline) off the async workers.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

fn slot(state: &AppState, id: &str) -> Result<Arc<CaseSlot>, ApiError> {
    state.store.get(id).ok_or_else(|| ApiError::case_not_found(id))
}

async fn healthz(State(state): Shared) -> Json<serde_json::Value> {
    let backend = state.pipeline.backend();
    Json(json!({
        "model": backend.kind(),
        "landmark_count": backend.landmark_count(),
    }))
}

async fn create_case(State(state): Shared, mut multipart: Multipart) -> Result<Response, ApiError> {
    let mut image: Option<Vec<u8>> = None;
    let mut spacing: Option<f64> = None;
    while let Some(field) = multipart.next_field().await.map_err(multipart_error)? {
        match field.name() {
            Some("image") => {
                image = Some(field.bytes().await.map_err(multipart_error)?.to_vec());
            }
            Some("pixel_spacing_mm") => {
                let text = field.text().await.map_err(multipart_error)?;
                let text = text.trim();
                if !text.is_empty() {
                    spacing = Some(parse_spacing(text)?);
                }
            }
            _ => {
                // drain and ignore unknown parts
                field.bytes().await.map_err(multipart_error)?;
            }
        }
    }
    let bytes = image.ok_or_else(|| {
        ApiError::new(StatusCode::BAD_REQUEST, "MissingImage", "no 'image' part in upload")
    })?;

    let created = blocking(move || {
        let format = detect_format(&bytes)?;
        let decoded = image_io::decode_bytes(&bytes, Some(format))?;
        let record = state.store.create(
            &bytes,
            format,
            decoded.width(),
            decoded.height(),
            spacing,
            Utc::now(),
        )?;
        Ok(record)
    })
    .await?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "case_id": created.case_id() })),
    )
        .into_response())
}

fn parse_spacing(text: &str) -> Result<f64, ApiError> {
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "InvalidCalibration",
            format!("pixel_spacing_mm must be a positive number, got '{text}'"),
        )),
    }
}

fn multipart_error(e: axum::extract::multipart::MultipartError) -> ApiError {
    let status = e.status();
    let kind = if status == StatusCode::PAYLOAD_TOO_LARGE {
        "PayloadTooLarge"
    } else {
        "BadMultipart"
    };
    ApiError::new(status, kind, e.body_text())
}

fn case_summary(state: &CaseState) -> serde_json::Value {
    let r = &state.record;
    json!({
        "case_id": r.case_id,
        "status": state.status(),
        "width": r.width,
        "height": r.height,
        "pixel_spacing_mm": r.pixel_spacing_mm,
        "created_at": reporting::format_timestamp(&r.created_at),
        "history_len": state.history.len(),
    })
}

async fn get_case(State(state): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let snap = slot(&state, &id)?.snapshot();
    Ok(Json(case_summary(&snap)).into_response())
}

async fn decode_case(State(state): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let slot = slot(&state, &id)?;
    let committed = blocking(move || {
        let _guard = slot.lock();
        let snap = slot.snapshot();
        let image = image_io::decode_bytes(
            &std::fs::read(slot.image_path()).map_err(|e| ApiError::internal(e.to_string()))?,
            Some(snap.record.source_format),
        )?
        .with_pixel_spacing(snap.record.pixel_spacing_mm)?;
        let output = state.pipeline.run_image(&image, snap.case_id(), 0.0)?;
        Ok(slot.commit_decode(&output, Utc::now())?)
    })
    .await?;
    let decode = committed.record.decode.as_ref().expect("just decoded");
    Ok(Json(json!({
        "landmarks": decode.landmarks.points,
        "missing": decode.landmarks.missing,
        "timings_ms": decode.timings_ms,
    }))
    .into_response())
}

fn require_decoded(snap: &CaseState) -> Result<&ceph_core::LandmarkSet, ApiError> {
    snap.current.as_ref().ok_or_else(ApiError::not_decoded)
}

async fn get_landmarks(State(state): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let snap = slot(&state, &id)?.snapshot();
    let current = require_decoded(&snap)?;
    Ok(Json(json!({
        "status": snap.status(),
        "landmarks": current.points,
        "missing": current.missing,
    }))
    .into_response())
}

#[derive(Debug, Deserialize)]
struct Correction {
    x: f64,
    y: f64,
}

async fn correct_landmark(
    State(state): Shared,
    Path((id, lid)): Path<(String, String)>,
    body: axum::body::Bytes,
) -> Result<Response, ApiError> {
    let slot = slot(&state, &id)?;
    if !state.pipeline.catalog().contains(&lid) {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "LandmarkNotFound",
            format!("no landmark {lid} in the catalog"),
        ));
    }
    let Correction { x, y } = serde_json::from_slice(&body).map_err(|e| {
        ApiError::new(StatusCode::BAD_REQUEST, "BadRequest", format!("expected {{\"x\", \"y\"}}: {e}"))
    })?;
    let measurements = blocking(move || {
        let _guard = slot.lock();
        let snap = slot.snapshot();
        require_decoded(&snap)?;
        let (w, h) = (snap.record.width, snap.record.height);
        let inside = x.is_finite()
            && y.is_finite()
            && (0.0..=f64::from(w - 1)).contains(&x)
            && (0.0..=f64::from(h - 1)).contains(&y);
        if !inside {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "OutOfBounds",
                format!("({x}, {y}) is outside the {w}x{h} image"),
            ));
        }
        let next = slot.commit_correction(&lid, ceph_core::Point::new(x, y), ACTOR, Utc::now())?;
        let current = next.current.as_ref().expect("decoded");
        Ok(state.pipeline.measure(current, next.record.pixel_spacing_mm))
    })
    .await?;
    Ok(Json(json!({ "measurements": measurements })).into_response())
}

/// Report for the current landmarks, stamped with the request time.
pub fn build_report(pipeline: &Pipeline, snap: &CaseState) -> Result<CephReport, ApiError> {
    let current = require_decoded(snap)?;
    let decode = snap.record.decode.as_ref().expect("decoded");
    Ok(CephReport {
        case_id: snap.case_id().to_string(),
        created_at: Utc::now(),
        pixel_spacing_mm: snap.record.pixel_spacing_mm,
        landmarks: current.clone(),
        measurements: pipeline.measure(current, snap.record.pixel_spacing_mm),
        timings_ms: decode.timings_ms,
    })
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    format: Option<String>,
}

async fn get_report(
    State(state): Shared,
    Path(id): Path<String>,
    Query(q): Query<ReportQuery>,
) -> Result<Response, ApiError> {
    let snap = slot(&state, &id)?.snapshot();
    let report = build_report(&state.pipeline, &snap)?;
    match q.format.as_deref().unwrap_or("json") {
        "json" => Ok(Json(report).into_response()),
        "csv" => {
            let text = to_csv_string(&report).map_err(|e| ApiError::internal(e.to_string()))?;
            Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], text).into_response())
        }
        other => Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "BadRequest",
            format!("unknown report format '{other}' (csv or json)"),
        )),
    }
}

async fn get_overlay(State(state): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let slot = slot(&state, &id)?;
    let snap = slot.snapshot();
    require_decoded(&snap)?;
    let png = blocking(move || {
        let bytes = std::fs::read(slot.image_path()).map_err(|e| ApiError::internal(e.to_string()))?;
        let image = image_io::decode_bytes(&bytes, Some(snap.record.source_format))?;
        let current = snap.current.as_ref().expect("decoded");
        let rgb = render_overlay(&image, current, state.pipeline.definitions());
        encode_png(&rgb).map_err(|e| ApiError::internal(e.to_string()))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

impl CaseStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseStatus::Uploaded => "UPLOADED",
            CaseStatus::Decoded => "DECODED",
            CaseStatus::Reviewed => "REVIEWED",
        }
    }
}
