//! Routes and shared state.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gaitpref::candidates::chat::ChatProvider;
use serde::Deserialize;
use tokio::sync::{Mutex, RwLock};
use tower_http::cors::{Any, CorsLayer};

use crate::error::ServiceError;
use crate::session::{
    CreateSession, ResultView, ServiceConfig, Session, SessionState, SessionView,
};

type Shared = Arc<Mutex<Session>>;

pub struct AppState {
    sessions: RwLock<HashMap<String, Shared>>,
    llm: Option<Arc<dyn ChatProvider>>,
    config: ServiceConfig,
    snapshot_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(
        config: ServiceConfig,
        llm: Option<Arc<dyn ChatProvider>>,
        snapshot_dir: Option<PathBuf>,
    ) -> Self {
        AppState {
            sessions: RwLock::new(HashMap::new()),
            llm,
            config,
            snapshot_dir,
        }
    }

    /// Reloads every `*.json` snapshot in the snapshot directory.
    pub fn restore(&self) -> anyhow::Result<usize> {
        let Some(dir) = &self.snapshot_dir else {
            return Ok(0);
        };
        if !dir.exists() {
            return Ok(0);
        }
        let mut sessions = self.sessions.try_write()?;
        let mut loaded = 0;
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let session: Session = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
            sessions.insert(session.id.clone(), Arc::new(Mutex::new(session)));
            loaded += 1;
        }
        Ok(loaded)
    }

    async fn get(&self, id: &str) -> Result<Shared, ServiceError> {
        self.sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    async fn snapshot(&self, session: &Session) -> Result<(), ServiceError> {
        let Some(dir) = &self.snapshot_dir else {
            return Ok(());
        };
        let json = serde_json::to_vec_pretty(session)
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        tokio::fs::create_dir_all(dir)
            .await
            .and(tokio::fs::write(dir.join(format!("{}.json", session.id)), json).await)
            .map_err(|e| ServiceError::Internal(format!("snapshot: {e}")))
    }
}

/// Builds the router. `cors_origin` restricts CORS to one origin; `None` allows any.
pub fn router(state: Arc<AppState>, cors_origin: Option<HeaderValue>) -> Router {
    let cors = match cors_origin {
        Some(origin) => CorsLayer::new().allow_origin(origin),
        None => CorsLayer::new().allow_origin(Any),
    }
    .allow_methods(Any)
    .allow_headers(Any);
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/ranking", post(submit_ranking))
        .route("/sessions/{id}/feedback", post(submit_feedback))
        .route("/sessions/{id}/result", get(get_result))
        .layer(cors)
        .with_state(state)
}

fn join_error(e: tokio::task::JoinError) -> ServiceError {
    ServiceError::Internal(format!("worker task failed: {e}"))
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    Json(req): Json<CreateSession>,
) -> Result<Response, ServiceError> {
    req.validate()?;
    let id = uuid::Uuid::new_v4().to_string();
    let worker = app.clone();
    let session = tokio::task::spawn_blocking(move || {
        Session::create(id, &req, &worker.config, worker.llm.as_deref())
    })
    .await
    .map_err(join_error)??;

    let status = if session.state == SessionState::Error {
        tracing::warn!(id = %session.id, error = ?session.error, "session failed at creation");
        StatusCode::BAD_GATEWAY
    } else {
        StatusCode::CREATED
    };
    app.snapshot(&session).await?;
    let body = Json(SessionView::from(&session)).into_response();
    app.sessions
        .write()
        .await
        .insert(session.id.clone(), Arc::new(Mutex::new(session)));
    Ok((status, body).into_response())
}

async fn get_session(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ServiceError> {
    let shared = app.get(&id).await?;
    let session = shared.lock().await;
    Ok(Json(SessionView::from(&*session)).into_response())
}

#[derive(Debug, Deserialize)]
struct RankingBody {
    ranking: Vec<usize>,
}

async fn submit_ranking(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<RankingBody>,
) -> Result<Response, ServiceError> {
    let shared = app.get(&id).await?;
    let mut guard = shared.lock().await;
    let mut working = guard.clone();
    let worker = app.clone();
    let (working, outcome) = tokio::task::spawn_blocking(move || {
        let outcome = working.rank(&body.ranking, &worker.config);
        (working, outcome)
    })
    .await
    .map_err(join_error)?;
    if working != *guard {
        app.snapshot(&working).await?;
        *guard = working;
    }
    outcome?;
    Ok(Json(ResultView::of(&guard)?).into_response())
}

#[derive(Debug, Deserialize)]
struct FeedbackBody {
    feedback: String,
}

async fn submit_feedback(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<FeedbackBody>,
) -> Result<Response, ServiceError> {
    let shared = app.get(&id).await?;
    let mut guard = shared.lock().await;
    let mut working = guard.clone();
    let worker = app.clone();
    let (working, outcome) = tokio::task::spawn_blocking(move || {
        let outcome = working.feedback(&body.feedback, &worker.config, worker.llm.as_deref());
        (working, outcome)
    })
    .await
    .map_err(join_error)?;
    if working != *guard {
        app.snapshot(&working).await?;
        *guard = working;
    }
    outcome?;
    let status = if guard.state == SessionState::Error {
        StatusCode::BAD_GATEWAY
    } else {
        StatusCode::OK
    };
    Ok((status, Json(SessionView::from(&*guard))).into_response())
}

async fn get_result(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ServiceError> {
    let shared = app.get(&id).await?;
    let session = shared.lock().await;
    Ok(Json(ResultView::of(&session)?).into_response())
}
