//! REST service for interactive scar tracking sessions.
//!
//! ```text
//! POST /api/v1/sessions                        {manifest_path, params?}
//! GET  /api/v1/sessions
//! GET  /api/v1/sessions/{id}
//! POST /api/v1/sessions/{id}/prompts           {frame, points: [{row, col, polarity}]}
//! POST /api/v1/sessions/{id}/propagate         {from_frame?}
//! GET  /api/v1/sessions/{id}/frames/{k}/mask.pgm
//! GET  /api/v1/sessions/{id}/frames/{k}/display.png
//! GET  /api/v1/sessions/{id}/area.csv
//! PUT  /api/v1/sessions/{id}/truth             {masks: [base64 PGM]}
//! GET  /api/v1/sessions/{id}/metrics.json
//! POST /segment                                backend protocol, native tracker
//! ```

mod error;
mod state;

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use lsvt_core::analysis::{AreaEntry, AreaSeries};
use lsvt_core::metrics::evaluate_sequence;
use lsvt_core::raster::io::{decode_mask, encode_mask};
use lsvt_core::raster::BinaryMask;
use lsvt_core::sequence::{load_manifest, DisplayFormat};
use lsvt_core::store::{SessionOp, SessionStatus};
use lsvt_core::tracker::protocol::{handle_segment, SegmentRequest, SegmentResponse};
use lsvt_core::tracker::{BackendError, NativeBackend, Polarity, PromptPoint};
use lsvt_core::TrackerParams;
use serde::Deserialize;
use serde_json::{json, Value};

pub use error::{ApiError, ApiResult};
pub use state::{AppState, ServiceConfig, SessionHandle, Snapshot, DEFAULT_SYNC_LIMIT};

type Shared = Arc<AppState>;

const MAX_BODY_BYTES: usize = 512 * 1024 * 1024;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/v1/sessions", post(create_session).get(list_sessions))
        .route("/api/v1/sessions/{id}", get(session_status))
        .route("/api/v1/sessions/{id}/prompts", post(add_prompts))
        .route("/api/v1/sessions/{id}/propagate", post(propagate))
        .route("/api/v1/sessions/{id}/frames/{k}/mask.pgm", get(frame_mask))
        .route("/api/v1/sessions/{id}/frames/{k}/display.png", get(frame_display))
        .route("/api/v1/sessions/{id}/area.csv", get(area_csv))
        .route("/api/v1/sessions/{id}/truth", axum::routing::put(put_truth))
        .route("/api/v1/sessions/{id}/metrics.json", get(metrics_json))
        .route("/segment", post(segment))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

/// Runs blocking tracker work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

#[derive(Debug, Deserialize)]
struct CreateBody {
    manifest_path: PathBuf,
    #[serde(default)]
    params: Option<Value>,
}

async fn create_session(State(state): State<Shared>, body: axum::body::Bytes) -> ApiResult<Response> {
    let body: CreateBody = parse_json(&body)?;
    let params = match body.params {
        None => TrackerParams::default(),
        Some(v) => {
            let p: TrackerParams =
                serde_json::from_value(v).map_err(|e| ApiError::unprocessable(format!("invalid params: {e}")))?;
            p.validate().map_err(|e| ApiError::unprocessable(e.to_string()))?;
            p
        }
    };
    let st = state.clone();
    let handle = blocking(move || {
        let path = std::path::absolute(&body.manifest_path)
            .map_err(|e| ApiError::bad_request(format!("manifest path: {e}")))?;
        let sequence = load_manifest(&path).map_err(ApiError::from_manifest)?;
        st.create(path, Arc::new(sequence), params)
    })
    .await?;
    tracing::info!(session = %handle.id, frames = handle.sequence.len(), "created session");
    Ok((StatusCode::CREATED, Json(status_json(&handle))).into_response())
}

fn status_json(handle: &SessionHandle) -> Value {
    let snap = handle.snapshot();
    let r = &snap.record;
    json!({
        "session_id": r.session_id,
        "manifest_path": r.manifest_path,
        "frames": r.frames,
        "dates": handle.sequence.dates(),
        "width": handle.sequence.template().width,
        "height": handle.sequence.template().height,
        "cell_size": handle.sequence.template().cell_size,
        "params": r.params,
        "backend": r.backend,
        "revision": r.revision,
        "cursor": r.cursor,
        "status": r.status,
        "busy": handle.is_busy(),
        "last_error": r.last_error,
        "halted_at": snap.halted_at,
        "prompts": snap.session.as_ref().map(|s| s.prompts().all()).unwrap_or_default(),
        "truth": snap.truth.is_some(),
    })
}

async fn list_sessions(State(state): State<Shared>) -> Json<Value> {
    Json(json!({ "sessions": state.ids() }))
}

async fn session_status(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let handle = state.get(&id)?;
    Ok(Json(status_json(&handle)))
}

#[derive(Debug, Deserialize)]
struct PointBody {
    row: usize,
    col: usize,
    polarity: Polarity,
}

#[derive(Debug, Deserialize)]
struct PromptsBody {
    frame: usize,
    points: Vec<PointBody>,
}

async fn add_prompts(State(state): State<Shared>, Path(id): Path<String>, body: axum::body::Bytes) -> ApiResult<Json<Value>> {
    let handle = state.get(&id)?;
    let body: PromptsBody = parse_json(&body)?;
    let n = handle.sequence.len();
    if body.frame >= n {
        return Err(ApiError::unprocessable(format!("frame {} outside 0..{n}", body.frame)));
    }
    if body.points.is_empty() {
        return Err(ApiError::unprocessable("no points given"));
    }
    let prompts: Vec<PromptPoint> = body
        .points
        .iter()
        .map(|p| PromptPoint {
            frame_index: body.frame,
            row: p.row,
            col: p.col,
            polarity: p.polarity,
        })
        .collect();
    let guard = handle.try_write()?;
    let snap = handle.snapshot();
    let op = match &snap.session {
        None if body.frame == 0 => SessionOp::Init { prompts },
        None => {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "precondition",
                "the first prompts must be on frame 0",
            ))
        }
        Some(_) if snap.record.params.auto_propagate => SessionOp::Refine {
            prompts,
            halted_at: None,
        },
        Some(_) => SessionOp::AddPrompts { prompts },
    };
    let backend = state.backend.clone();
    let h = handle.clone();
    let frame = body.frame;
    let snap = blocking(move || {
        let result = h.apply(&guard, &op, &backend);
        drop(guard);
        result
    })
    .await?;
    let warnings = snap
        .session
        .as_ref()
        .and_then(|s| s.frame_result(frame))
        .map(|r| r.warnings.clone())
        .unwrap_or_default();
    Ok(Json(json!({
        "revision": snap.record.revision,
        "cursor": snap.record.cursor,
        "warnings": warnings,
    })))
}

#[derive(Debug, Default, Deserialize)]
struct PropagateBody {
    #[serde(default)]
    from_frame: Option<usize>,
}

async fn propagate(State(state): State<Shared>, Path(id): Path<String>, body: axum::body::Bytes) -> ApiResult<Response> {
    let handle = state.get(&id)?;
    let body: PropagateBody = if body.is_empty() { PropagateBody::default() } else { parse_json(&body)? };
    let guard = handle.try_write()?;
    let snap = handle.snapshot();
    let Some(session) = &snap.session else {
        return Err(ApiError::new(StatusCode::CONFLICT, "precondition", "session has no frame-0 mask yet"));
    };
    let next = session.cursor().map_or(0, |c| c + 1);
    let from_frame = body.from_frame.unwrap_or(next.min(handle.sequence.len() - 1));
    if from_frame > next {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "precondition",
            format!("cannot propagate from frame {from_frame}: masks exist only up to frame {}", next - 1),
        ));
    }
    let op = SessionOp::Propagate {
        from_frame,
        halted_at: None,
    };
    let backend = state.backend.clone();
    let h = handle.clone();
    if handle.sequence.len() <= state.config.sync_limit {
        let snap = blocking(move || {
            let result = h.apply(&guard, &op, &backend);
            drop(guard);
            result
        })
        .await?;
        return Ok(Json(json!({ "cursor": snap.record.cursor, "revision": snap.record.revision })).into_response());
    }

    handle.set_status(&guard, SessionStatus::Propagating)?;
    let id_for_log = id.clone();
    tokio::task::spawn_blocking(move || {
        if let Err(e) = h.apply(&guard, &op, &backend) {
            tracing::warn!(session = %id_for_log, error = ?e.body, "background propagation failed");
        }
        drop(guard);
    });
    let status_url = format!("/api/v1/sessions/{id}");
    Ok((
        StatusCode::ACCEPTED,
        [(header::LOCATION, status_url.clone())],
        Json(json!({ "status": "propagating", "status_url": status_url })),
    )
        .into_response())
}

fn etag(revision: u64) -> String {
    format!("\"r{revision}\"")
}

fn cached(headers: &HeaderMap, revision: u64, content_type: &'static str, body: Vec<u8>) -> Response {
    let tag = etag(revision);
    let tag_value = HeaderValue::from_str(&tag).expect("ascii etag");
    if headers
        .get(header::IF_NONE_MATCH)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.split(',').any(|t| t.trim() == tag || t.trim() == "*"))
    {
        return (StatusCode::NOT_MODIFIED, [(header::ETAG, tag_value)]).into_response();
    }
    (
        [(header::CONTENT_TYPE, HeaderValue::from_static(content_type)), (header::ETAG, tag_value)],
        body,
    )
        .into_response()
}

fn check_frame(handle: &SessionHandle, k: usize) -> ApiResult<()> {
    if k >= handle.sequence.len() {
        return Err(ApiError::not_found(format!("frame {k} outside 0..{}", handle.sequence.len())));
    }
    Ok(())
}

async fn frame_mask(State(state): State<Shared>, Path((id, k)): Path<(String, usize)>, headers: HeaderMap) -> ApiResult<Response> {
    let handle = state.get(&id)?;
    check_frame(&handle, k)?;
    let snap = handle.snapshot();
    let mask = snap
        .session
        .as_ref()
        .and_then(|s| s.mask(k))
        .ok_or_else(|| ApiError::not_found(format!("no mask for frame {k} yet")))?;
    Ok(cached(&headers, snap.record.revision, "image/x-portable-graymap", encode_mask(mask)))
}

async fn frame_display(State(state): State<Shared>, Path((id, k)): Path<(String, usize)>, headers: HeaderMap) -> ApiResult<Response> {
    let handle = state.get(&id)?;
    check_frame(&handle, k)?;
    let revision = handle.snapshot().record.revision;
    let h = handle.clone();
    let png = blocking(move || DisplayFormat::Png.encode(&h.sequence.frames()[k]).map_err(ApiError::from)).await?;
    Ok(cached(&headers, revision, "image/png", png))
}

/// Areas of the frames that currently have masks.
fn current_series(handle: &SessionHandle, snap: &Snapshot) -> AreaSeries {
    let masks = snap.session.as_ref().map(|s| s.masks()).unwrap_or_default();
    let entries = masks
        .iter()
        .enumerate()
        .map(|(k, m)| AreaEntry {
            frame_index: k,
            date: handle.sequence.frames()[k].date,
            area_m2: m.area_m2(),
        })
        .collect();
    AreaSeries::new(entries, Some(handle.sequence.template().cell_size)).expect("sequence dates are increasing")
}

async fn area_csv(State(state): State<Shared>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Response> {
    let handle = state.get(&id)?;
    let snap = handle.snapshot();
    let csv = current_series(&handle, &snap).to_csv();
    Ok(cached(&headers, snap.record.revision, "text/csv; charset=utf-8", csv.into_bytes()))
}

#[derive(Debug, Deserialize)]
struct TruthBody {
    masks: Vec<String>,
}

async fn put_truth(State(state): State<Shared>, Path(id): Path<String>, body: axum::body::Bytes) -> ApiResult<Json<Value>> {
    let handle = state.get(&id)?;
    let body: TruthBody = parse_json(&body)?;
    let template = *handle.sequence.template();
    let n = handle.sequence.len();
    if body.masks.len() != n {
        return Err(ApiError::conflict(format!("{} truth masks for {n} frames", body.masks.len())));
    }
    let guard = handle.try_write()?;
    let h = handle.clone();
    blocking(move || {
        let masks = body
            .masks
            .iter()
            .enumerate()
            .map(|(k, b64)| {
                let bytes = STANDARD
                    .decode(b64)
                    .map_err(|e| ApiError::bad_request(format!("truth mask {k}: {e}")))?;
                let m = decode_mask(&bytes).map_err(|e| ApiError::bad_request(format!("truth mask {k}: {e}")))?;
                if m.width() != template.width || m.height() != template.height {
                    return Err(ApiError::conflict(format!(
                        "truth mask {k} is {}x{}, frames are {}x{}",
                        m.width(),
                        m.height(),
                        template.width,
                        template.height
                    )));
                }
                Ok(BinaryMask::from_bits(m.width(), m.height(), template.cell_size, m.bits().to_vec())?)
            })
            .collect::<ApiResult<Vec<_>>>()?;
        h.set_truth(&guard, masks)
    })
    .await?;
    Ok(Json(json!({ "frames": n })))
}

async fn metrics_json(State(state): State<Shared>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Response> {
    let handle = state.get(&id)?;
    let snap = handle.snapshot();
    let truth = snap
        .truth
        .clone()
        .ok_or_else(|| ApiError::not_found("no truth masks uploaded"))?;
    let session = snap
        .session
        .as_ref()
        .filter(|s| s.is_complete())
        .ok_or_else(|| ApiError::conflict("masks are not available for every frame yet"))?;
    let masks: Vec<BinaryMask> = session.masks().into_iter().cloned().collect();
    let report = evaluate_sequence(&masks, &truth, Some(&handle.sequence.dates()))?;
    Ok(cached(
        &headers,
        snap.record.revision,
        "application/json",
        report.to_json().into_bytes(),
    ))
}

/// Backend endpoint served by the native tracker, so that the service can
/// stand in for an external model.
async fn segment(body: axum::body::Bytes) -> ApiResult<Json<SegmentResponse>> {
    let request: SegmentRequest = parse_json(&body)?;
    let resp = blocking(move || {
        handle_segment(&NativeBackend, &request).map_err(|e| match e {
            BackendError::Protocol(m) => ApiError::bad_request(m),
            BackendError::Rejected(m) => ApiError::unprocessable(m),
            BackendError::Unavailable(m) => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "unavailable", m),
        })
    })
    .await?;
    Ok(Json(resp))
}
