//! HTTP JSON API over [`Service`].
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/api/{phase}/{track}/submissions` | multipart: `manifest` JSON part + KSB1 volume parts |
//! | GET | `/api/{phase}/{track}/leaderboard` | ranked scorecards, or 403 `sealed` |
//! | GET | `/api/{phase}/{track}/submissions/{id}/scorecard` | |
//! | GET | `/api/{phase}/{track}/submissions/{id}/thumbnails/{n}` | PNG, `n` in 0..3 |
//! | POST | `/api/admin/close_window` | |
//! | GET | `/api/study/{track}/session` | reader token |
//! | GET | `/api/study/{track}/cases/{case}/{file}` | bundle descriptor or PNG |
//! | POST | `/api/study/{track}/responses` | `ReaderResponse` JSON |
//!
//! Errors are `{"error": code, "detail": text}`. Tokens are sent as
//! `Authorization: Bearer <token>` or, for study links, `?token=<token>`.

use std::collections::HashMap;
use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tokio::net::TcpListener;

use crate::error::{EvalError, Result};
use crate::protocol::{parse_track, timestamp, Phase};
use crate::service::{Service, SubmissionManifest};
use crate::study::ReaderResponse;

/// Upload limit for one submission request.
pub const MAX_UPLOAD_BYTES: usize = 2 << 30;

impl EvalError {
    pub fn status(&self) -> StatusCode {
        match self {
            EvalError::RateLimited { .. } => StatusCode::TOO_MANY_REQUESTS,
            EvalError::AlreadySubmitted(_) | EvalError::AlreadyResponded(_) => StatusCode::CONFLICT,
            EvalError::WindowClosed | EvalError::Sealed => StatusCode::FORBIDDEN,
            EvalError::Unauthorized(_) => StatusCode::UNAUTHORIZED,
            EvalError::NotFound(_) => StatusCode::NOT_FOUND,
            EvalError::SubmissionIncomplete { .. }
            | EvalError::InvalidPermutation(_)
            | EvalError::IncompleteResponse(_)
            | EvalError::OutOfScale { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            EvalError::BadRequest(_) | EvalError::Json(_) => StatusCode::BAD_REQUEST,
            EvalError::Core(_) if self.code() != "internal" => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for EvalError {
    fn into_response(self) -> Response {
        let body = json!({"error": self.code(), "detail": self.to_string()});
        (self.status(), Json(body)).into_response()
    }
}

type Shared = Arc<Service>;

fn bearer(headers: &HeaderMap, query: &HashMap<String, String>) -> Option<String> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(|t| t.trim().to_string())
        .or_else(|| query.get("token").cloned())
}

fn board(phase: &str, track: &str) -> Result<(Phase, kbench_core::sampling::Track)> {
    Ok((phase.parse()?, parse_track(track)?))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| EvalError::Io(std::io::Error::other(e)))?
}

async fn submit(
    State(svc): State<Shared>,
    Path((phase, track)): Path<(String, String)>,
    headers: HeaderMap,
    mut multipart: Multipart,
) -> Result<Response> {
    let (phase, track) = board(&phase, &track)?;
    let mut manifest: Option<SubmissionManifest> = None;
    let mut blobs = Vec::new();
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| EvalError::BadRequest(e.to_string()))?
    {
        let is_manifest = field.name() == Some("manifest");
        let data = field.bytes().await.map_err(|e| EvalError::BadRequest(e.to_string()))?;
        if is_manifest {
            manifest = Some(serde_json::from_slice(&data)?);
        } else {
            blobs.push(data.to_vec());
        }
    }
    let manifest = manifest.ok_or_else(|| EvalError::BadRequest("no manifest part".into()))?;
    let token = bearer(&headers, &HashMap::new());
    let receipt = blocking(move || svc.submit(phase, track, token.as_deref(), manifest, blobs)).await?;
    Ok((StatusCode::CREATED, Json(receipt)).into_response())
}

async fn leaderboard(State(svc): State<Shared>, Path((phase, track)): Path<(String, String)>) -> Result<Response> {
    let (phase, track) = board(&phase, &track)?;
    let entries = svc.leaderboard(phase, track)?;
    Ok(Json(json!({"phase": phase, "track": track, "entries": entries})).into_response())
}

async fn scorecard(
    State(svc): State<Shared>,
    Path((phase, track, id)): Path<(String, String, String)>,
) -> Result<Response> {
    let (phase, track) = board(&phase, &track)?;
    Ok(Json(svc.scorecard(phase, track, &id)?).into_response())
}

async fn thumbnail(
    State(svc): State<Shared>,
    Path((phase, track, id, n)): Path<(String, String, String, String)>,
) -> Result<Response> {
    let (phase, track) = board(&phase, &track)?;
    let n: usize = n
        .trim_end_matches(".png")
        .parse()
        .map_err(|_| EvalError::NotFound(format!("thumbnail {n}")))?;
    let png = svc.thumbnail(phase, track, &id, n)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn close_window(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response> {
    let token = bearer(&headers, &q);
    let at = blocking(move || svc.close_window(token.as_deref())).await?;
    Ok(Json(json!({"window_closed_at": timestamp(&at)})).into_response())
}

async fn study_session(
    State(svc): State<Shared>,
    Path(track): Path<String>,
    headers: HeaderMap,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response> {
    let track = parse_track(&track)?;
    Ok(Json(svc.study_session(track, bearer(&headers, &q).as_deref())?).into_response())
}

async fn study_file(
    State(svc): State<Shared>,
    Path((track, case, file)): Path<(String, String, String)>,
    headers: HeaderMap,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response> {
    let track = parse_track(&track)?;
    let token = bearer(&headers, &q);
    let bytes = svc.study_file(track, token.as_deref(), &case, &file)?;
    let ctype = if file.ends_with(".png") {
        "image/png"
    } else {
        "application/json"
    };
    Ok(([(header::CONTENT_TYPE, ctype)], bytes).into_response())
}

async fn study_response(
    State(svc): State<Shared>,
    Path(track): Path<String>,
    headers: HeaderMap,
    Query(q): Query<HashMap<String, String>>,
    body: Bytes,
) -> Result<Response> {
    let track = parse_track(&track)?;
    let response: ReaderResponse = serde_json::from_slice(&body)?;
    let token = bearer(&headers, &q);
    let ack = blocking(move || svc.study_submit(track, token.as_deref(), response)).await?;
    Ok((StatusCode::CREATED, Json(ack)).into_response())
}

pub fn router(svc: Shared) -> Router {
    Router::new()
        .route(
            "/api/{phase}/{track}/submissions",
            post(submit).layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES)),
        )
        .route("/api/{phase}/{track}/leaderboard", get(leaderboard))
        .route("/api/{phase}/{track}/submissions/{id}/scorecard", get(scorecard))
        .route("/api/{phase}/{track}/submissions/{id}/thumbnails/{n}", get(thumbnail))
        .route("/api/admin/close_window", post(close_window))
        .route("/api/study/{track}/session", get(study_session))
        .route("/api/study/{track}/cases/{case}/{file}", get(study_file))
        .route("/api/study/{track}/responses", post(study_response))
        .with_state(svc)
}

pub async fn serve(
    svc: Shared,
    listener: TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(svc))
        .with_graceful_shutdown(shutdown)
        .await
}
