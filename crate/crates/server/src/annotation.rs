//! Annotation service.
//!
//! | method | path                         | body / reply                          |
//! |--------|------------------------------|---------------------------------------|
//! | GET    | `/api/session/new`           | `{"annotator_id": ...}`               |
//! | GET    | `/api/tasks/next?annotator=` | task without sources, or 204          |
//! | POST   | `/api/votes`                 | `{task_id, annotator_id, choices}`    |
//! | GET    | `/api/report`                | report JSON                           |
//!
//! Anything else falls through to the optional static asset directory.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use simseek::humaneval::{Ballot, HumanEvalError, Session};
use tower_http::services::ServeDir;

pub struct AnnotationState {
    session: Mutex<Session>,
    n_samples: usize,
    seed: u64,
}

impl AnnotationState {
    /// `n_samples` and `seed` configure the bootstrap behind `/api/report`.
    pub fn new(session: Session, n_samples: usize, seed: u64) -> Arc<Self> {
        Arc::new(Self {
            session: Mutex::new(session),
            n_samples,
            seed,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NewSession {
    pub annotator_id: String,
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    annotator: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VoteAccepted {
    pub accepted: usize,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<HumanEvalError> for ApiError {
    fn from(e: HumanEvalError) -> Self {
        let status = match e {
            HumanEvalError::UnknownTask(_) => StatusCode::NOT_FOUND,
            HumanEvalError::DuplicateVote { .. } => StatusCode::CONFLICT,
            HumanEvalError::EmptyAnnotator => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

pub fn annotation_router(state: Arc<AnnotationState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/session/new", get(new_session))
        .route("/api/tasks/next", get(next_task))
        .route("/api/votes", post(submit_vote))
        .route("/api/report", get(get_report))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

async fn new_session() -> Json<NewSession> {
    Json(NewSession {
        annotator_id: uuid::Uuid::new_v4().to_string(),
    })
}

async fn next_task(
    State(state): State<Arc<AnnotationState>>,
    Query(q): Query<NextQuery>,
) -> Result<Response, ApiError> {
    if q.annotator.trim().is_empty() {
        return Err(ApiError(StatusCode::BAD_REQUEST, "empty annotator id".into()));
    }
    let session = state.session.lock().expect("session lock poisoned");
    Ok(match session.next_task(&q.annotator) {
        Some(task) => Json(task.annotator_view()).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn submit_vote(
    State(state): State<Arc<AnnotationState>>,
    Json(ballot): Json<Ballot>,
) -> Result<(StatusCode, Json<VoteAccepted>), ApiError> {
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let mut session = state.session.lock().expect("session lock poisoned");
    session.submit(&ballot, now)?;
    log::info!("vote on {} from {}", ballot.task_id, ballot.annotator_id);
    Ok((StatusCode::CREATED, Json(VoteAccepted { accepted: 4 })))
}

async fn get_report(State(state): State<Arc<AnnotationState>>) -> Result<Response, ApiError> {
    // Snapshot under the lock, resample outside it.
    let (tasks, votes, panel) = {
        let s = state.session.lock().expect("session lock poisoned");
        (s.tasks().to_vec(), s.votes().to_vec(), s.panel_size())
    };
    let options = simseek::humaneval::ReportOptions {
        panel_size: panel,
        n_samples: state.n_samples,
        seed: state.seed,
    };
    let report = tokio::task::spawn_blocking(move || simseek::humaneval::report(&tasks, &votes, &options))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(report).into_response())
}
