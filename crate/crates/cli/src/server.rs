//! HTTP JSON API over [`AnnotationService`].

use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use vlogvis_core::annotation::service::{AnnotationService, ServiceError};
use vlogvis_core::annotation::LabelEntry;

type Shared = Arc<AnnotationService>;

#[derive(Debug, Deserialize)]
pub struct NextQuery {
    pub worker_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitBody {
    pub worker_id: String,
    pub labels: Vec<LabelEntry>,
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

fn error(status: StatusCode, message: impl ToString) -> Response {
    (status, Json(ErrorBody { error: message.to_string() })).into_response()
}

pub fn router(svc: Shared) -> Router {
    Router::new()
        .route("/api/hits/next", get(next_hit))
        .route("/api/hits/{hit_id}/labels", post(submit))
        .route("/api/progress", get(progress))
        .route("/api/agreement", get(agreement))
        .route("/frames/{miniclip_id}/{frame}", get(frame))
        .with_state(svc)
}

async fn next_hit(State(svc): State<Shared>, Query(q): Query<NextQuery>) -> Response {
    match svc.next_hit(&q.worker_id) {
        Some(view) => Json(view).into_response(),
        None => error(StatusCode::NOT_FOUND, "no HIT available for this worker"),
    }
}

async fn submit(
    State(svc): State<Shared>,
    Path(hit_id): Path<String>,
    Json(body): Json<SubmitBody>,
) -> Response {
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    // The service does blocking file appends.
    let result = tokio::task::spawn_blocking(move || {
        svc.submit(&hit_id, &body.worker_id, &body.labels, now)
    })
    .await;
    match result {
        Ok(Ok(outcome)) => Json(outcome).into_response(),
        Ok(Err(e)) => {
            let status = match &e {
                ServiceError::UnknownHit(_) => StatusCode::NOT_FOUND,
                ServiceError::Duplicate { .. } | ServiceError::HitComplete(_) => StatusCode::CONFLICT,
                ServiceError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
                ServiceError::Log(_) => StatusCode::INTERNAL_SERVER_ERROR,
            };
            error(status, e)
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn progress(State(svc): State<Shared>) -> Response {
    Json(svc.progress()).into_response()
}

async fn agreement(State(svc): State<Shared>) -> Response {
    Json(svc.agreement()).into_response()
}

async fn frame(State(svc): State<Shared>, Path((miniclip_id, frame)): Path<(String, String)>) -> Response {
    let Some(i) = frame.strip_suffix(".pgm").and_then(|n| n.parse::<usize>().ok()) else {
        return error(StatusCode::NOT_FOUND, "frame names look like 0.pgm");
    };
    let Some(path) = svc.frame_path(&miniclip_id, i) else {
        return error(StatusCode::NOT_FOUND, "unknown miniclip or frame");
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "image/x-portable-graymap")], bytes).into_response(),
        Err(_) => error(StatusCode::NOT_FOUND, "frame file missing"),
    }
}
