use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use scribseg::harness::MethodName;
use scribseg::{
    dice, dice_sweep, threshold_segment, BinaryMask, ChannelStack, Error, ScribbleSet,
    DEFAULT_SWEEP_STEPS,
};
use serde::Deserialize;
use serde_json::json;

use crate::render::{mask_png, preview_png, BandSelection};
use crate::session::{AppState, CachedMap, DistanceRequest, Lookup, Session};

const PGM: &str = "image/x-portable-graymap";
const PNG: &str = "image/png";
const CSV: &str = "text/csv";
const OCTETS: &str = "application/octet-stream";

pub(crate) struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::BAD_REQUEST, e.to_string())
    }

    fn unprocessable(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
    }

    fn conflict(message: &str) -> Self {
        Self::new(StatusCode::CONFLICT, message)
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no session {id}"))
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            log::error!("{}", self.message);
        }
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn lookup(state: &AppState, id: &str) -> ApiResult<Arc<Session>> {
    state.session(id).ok_or_else(|| ApiError::not_found(id))
}

fn parse_method(name: &str) -> ApiResult<MethodName> {
    name.parse().map_err(ApiError::bad_request)
}

fn with_type(content_type: &'static str, body: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, content_type)], body).into_response()
}

pub(crate) async fn create_session(
    State(state): State<AppState>,
    request: Request,
) -> ApiResult<Response> {
    let is_multipart = request
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let (stack_bytes, gt_bytes) = if is_multipart {
        let mut form = Multipart::from_request(request, &state)
            .await
            .map_err(ApiError::bad_request)?;
        let (mut stack, mut gt) = (None, None);
        while let Some(field) = form.next_field().await.map_err(ApiError::bad_request)? {
            let name = field.name().unwrap_or_default().to_string();
            let bytes = field.bytes().await.map_err(ApiError::bad_request)?;
            match name.as_str() {
                "stack" => stack = Some(bytes),
                "gt" => gt = Some(bytes),
                other => {
                    return Err(ApiError::bad_request(format!(
                        "unexpected form field {other:?}"
                    )))
                }
            }
        }
        (
            stack.ok_or_else(|| ApiError::bad_request("missing form field \"stack\""))?,
            gt,
        )
    } else {
        let body = Bytes::from_request(request, &state)
            .await
            .map_err(ApiError::bad_request)?;
        (body, None)
    };

    let stack = ChannelStack::from_cst_bytes(&stack_bytes).map_err(ApiError::bad_request)?;
    let gt = gt_bytes
        .map(|b| BinaryMask::from_pgm_bytes(&b))
        .transpose()
        .map_err(ApiError::bad_request)?;
    let (height, width, channels) = (stack.height(), stack.width(), stack.channels());
    let id = state
        .create_session(stack, gt)
        .map_err(ApiError::unprocessable)?;
    log::info!("session {id}: {height}x{width}x{channels}");
    Ok((
        StatusCode::CREATED,
        Json(json!({ "id": id, "height": height, "width": width, "channels": channels })),
    )
        .into_response())
}

pub(crate) async fn put_scribbles(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<StatusCode> {
    let session = lookup(&state, &id)?;
    let (h, w) = session.stack.dims();
    let scribbles = ScribbleSet::from_json(&body, h, w).map_err(|e| match e {
        Error::Json(_) => ApiError::bad_request(e),
        e => ApiError::unprocessable(e),
    })?;
    scribbles.seed_indices().map_err(ApiError::unprocessable)?;
    session.replace_scribbles(scribbles);
    Ok(StatusCode::NO_CONTENT)
}

pub(crate) async fn put_gt(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<StatusCode> {
    let session = lookup(&state, &id)?;
    let gt = BinaryMask::from_pgm_bytes(&body).map_err(ApiError::bad_request)?;
    if gt.dims() != session.stack.dims() {
        return Err(ApiError::unprocessable(Error::DimensionMismatch {
            expected: session.stack.dims(),
            actual: gt.dims(),
        }));
    }
    session.set_gt(gt);
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
pub(crate) struct DistanceQuery {
    method: String,
    lambda: Option<f64>,
    iters: Option<u32>,
}

fn distance_json(method: MethodName, map: &CachedMap, compute_ms: f64) -> Response {
    Json(json!({
        "method": method.as_str(),
        "min_raw": map.min_raw,
        "max_raw": map.max_raw,
        "compute_ms": compute_ms,
    }))
    .into_response()
}

pub(crate) async fn compute_distance(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<DistanceQuery>,
) -> ApiResult<Response> {
    let session = lookup(&state, &id)?;
    let defaults = scribseg::DistanceParams::default();
    let request = DistanceRequest {
        method: parse_method(&query.method)?,
        lambda: query.lambda.unwrap_or(defaults.lambda),
        iters: query.iters.unwrap_or(defaults.max_iterations),
    };
    request
        .params()
        .validate()
        .map_err(ApiError::unprocessable)?;

    let (found, scribbles) = session
        .distance_cell(request)
        .ok_or_else(|| ApiError::conflict("no scribbles set"))?;
    let cell = match found {
        Lookup::Ready(map) => return Ok(distance_json(request.method, &map, 0.0)),
        Lookup::Pending(cell) => cell,
    };
    let map = cell
        .get_or_try_init(|| async {
            let _running = session.compute_lock().await;
            state.record_computation();
            let worker = session.clone();
            tokio::task::spawn_blocking(move || worker.solve(request, &scribbles))
                .await
                .map_err(ApiError::internal)?
                .map(Arc::new)
                .map_err(ApiError::unprocessable)
        })
        .await?;
    Ok(distance_json(request.method, map, map.compute_ms))
}

#[derive(Deserialize)]
pub(crate) struct MethodQuery {
    method: String,
}

fn cached_map(session: &Session, method: MethodName) -> ApiResult<Arc<CachedMap>> {
    session
        .cached(method)
        .ok_or_else(|| ApiError::conflict("no distance map computed for this method"))
}

/// The raw (unnormalized) cached map as a single-channel CST file.
pub(crate) async fn get_distance(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<MethodQuery>,
) -> ApiResult<Response> {
    let session = lookup(&state, &id)?;
    let map = cached_map(&session, parse_method(&query.method)?)?;
    Ok(with_type(OCTETS, map.raw.to_stack().to_cst_bytes()))
}

#[derive(Deserialize)]
pub(crate) struct SegmentationQuery {
    method: String,
    t: f64,
    format: Option<String>,
}

/// Mask at threshold `t`; Dice against the ground truth, when present, goes in `x-dice`.
pub(crate) async fn get_segmentation(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<SegmentationQuery>,
) -> ApiResult<Response> {
    let session = lookup(&state, &id)?;
    let png = match query.format.as_deref() {
        None | Some("pgm") => false,
        Some("png") => true,
        Some(other) => return Err(ApiError::bad_request(format!("unknown format {other:?}"))),
    };
    if !(0.0..=1.0).contains(&query.t) {
        return Err(ApiError::unprocessable(format!(
            "threshold {} outside [0, 1]",
            query.t
        )));
    }
    let map = cached_map(&session, parse_method(&query.method)?)?;
    let mask = threshold_segment(&map.normalized, query.t).map_err(ApiError::unprocessable)?;
    let score = session
        .gt()
        .map(|gt| dice(&mask, &gt))
        .transpose()
        .map_err(ApiError::internal)?;
    let mut response = if png {
        with_type(PNG, mask_png(&mask))
    } else {
        with_type(PGM, mask.to_pgm_bytes())
    };
    if let Some(score) = score {
        let value = HeaderValue::from_str(&score.to_string()).map_err(ApiError::internal)?;
        response.headers_mut().insert("x-dice", value);
    }
    Ok(response)
}

#[derive(Deserialize)]
pub(crate) struct CurveQuery {
    method: String,
    steps: Option<usize>,
    format: Option<String>,
}

pub(crate) async fn get_dice_curve(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<CurveQuery>,
) -> ApiResult<Response> {
    let session = lookup(&state, &id)?;
    let csv = match query.format.as_deref() {
        None | Some("json") => false,
        Some("csv") => true,
        Some(other) => return Err(ApiError::bad_request(format!("unknown format {other:?}"))),
    };
    let method = parse_method(&query.method)?;
    let gt = session
        .gt()
        .ok_or_else(|| ApiError::conflict("session has no ground truth"))?;
    let map = cached_map(&session, method)?;
    let curve = dice_sweep(
        &map.normalized,
        &gt,
        query.steps.unwrap_or(DEFAULT_SWEEP_STEPS),
    )
    .map_err(ApiError::unprocessable)?;
    Ok(if csv {
        with_type(CSV, curve.to_csv().into_bytes())
    } else {
        Json(json!({
            "method": method.as_str(),
            "thresholds": curve.thresholds,
            "dice": curve.dice,
            "best_threshold": curve.best_threshold,
            "best_dice": curve.best_dice,
        }))
        .into_response()
    })
}

#[derive(Deserialize)]
pub(crate) struct PreviewQuery {
    bands: Option<String>,
}

pub(crate) async fn get_preview(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<PreviewQuery>,
) -> ApiResult<Response> {
    let session = lookup(&state, &id)?;
    let bands = BandSelection::parse(query.bands.as_deref()).map_err(ApiError::bad_request)?;
    let stack = session.stack.clone();
    let png = tokio::task::spawn_blocking(move || preview_png(&stack, &bands))
        .await
        .map_err(ApiError::internal)?
        .map_err(ApiError::unprocessable)?;
    Ok(with_type(PNG, png))
}
