//! HTTP API over the session store.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use counsel_core::emotion::SentimentClassifier;
use counsel_core::knowledge_base::{KnowledgeBase, KnowledgeBaseError};
use counsel_core::matching::{MatchConfig, Matcher};
use counsel_core::session::{DialogueEngine, ResponseBackend, SessionError, Speaker, Stage};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::net::TcpListener;

use crate::analysis::session_emotion;
use crate::config::{validate_window, ConfigError, ServiceConfig};
use crate::output;
use crate::sessions::{LiveSession, SessionStore, StoreError, TurnError};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Shared, immutable service state.
pub struct AppState {
    pub engine: Arc<DialogueEngine>,
    pub backend: Arc<dyn ResponseBackend>,
    pub classifier: Arc<dyn SentimentClassifier>,
    pub store: SessionStore,
    pub matching: MatchConfig,
    pub smoothing_window: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    KnowledgeBase(#[from] KnowledgeBaseError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("classifier: {0}")]
    Classifier(String),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server error: {0}")]
    Serve(std::io::Error),
}

impl AppState {
    pub fn from_config(config: &ServiceConfig) -> Result<Self, StartupError> {
        config.validate()?;
        let kb = Arc::new(KnowledgeBase::load(&config.kb_path, config.strict_kb)?);
        let engine = Arc::new(DialogueEngine::new(Arc::new(Matcher::new(kb))));
        let classifier = config
            .classifier
            .build()
            .map_err(|e| StartupError::Classifier(e.to_string()))?;
        let store = SessionStore::open(&config.data_dir)?;
        Ok(Self {
            engine,
            backend: config.build_backend(),
            classifier,
            store,
            matching: config.matching,
            smoothing_window: config.smoothing_window,
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(close_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/emotion", get(get_emotion))
        .route("/kb/disorders", get(list_disorders))
        .with_state(state)
}

/// Binds, prints the bound address on stdout and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), StartupError> {
    let state = Arc::new(AppState::from_config(&config)?);
    tracing::info!(sessions = state.store.len(), "recovered sessions");
    let listener = TcpListener::bind(&config.listen).await.map_err(|source| StartupError::Bind {
        addr: config.listen.clone(),
        source,
    })?;
    let addr: SocketAddr = listener.local_addr().map_err(StartupError::Serve)?;
    println!("listening on {addr}");
    use std::io::Write as _;
    let _ = std::io::stdout().flush();
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(StartupError::Serve)
}

fn json_response<T: Serialize>(status: StatusCode, body: &T) -> Response {
    (status, Json(output::to_value(body))).into_response()
}

fn error_response(status: StatusCode, message: impl Into<String>) -> Response {
    json_response(status, &json!({ "error": message.into() }))
}

fn not_found(id: &str) -> Response {
    error_response(StatusCode::NOT_FOUND, format!("unknown session `{id}`"))
}

fn internal(err: impl std::fmt::Display) -> Response {
    tracing::error!(%err, "request failed");
    error_response(StatusCode::INTERNAL_SERVER_ERROR, err.to_string())
}

async fn health(State(app): State<Arc<AppState>>) -> Response {
    let kb_records = app.engine.matcher().knowledge_base().len();
    json_response(StatusCode::OK, &json!({ "version": VERSION, "kb_records": kb_records }))
}

async fn list_disorders(State(app): State<Arc<AppState>>) -> Response {
    let list: Vec<Value> = app
        .engine
        .matcher()
        .knowledge_base()
        .records()
        .iter()
        .map(|r| json!({ "id": r.id, "name": r.name }))
        .collect();
    json_response(StatusCode::OK, &list)
}

async fn create_session(State(app): State<Arc<AppState>>) -> Response {
    let worker = app.clone();
    let created = tokio::task::spawn_blocking(move || {
        LiveSession::create(worker.store.dir(), &worker.engine, worker.matching)
    })
    .await;
    match created {
        Ok(Ok(live)) => {
            let body = json!({ "session_id": live.state().session_id, "stage": live.state().stage });
            app.store.insert(live);
            json_response(StatusCode::CREATED, &body)
        }
        Ok(Err(err)) => internal(err),
        Err(err) => internal(err),
    }
}

#[derive(Debug, Deserialize)]
struct MessageBody {
    text: String,
}

async fn post_message(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<MessageBody>,
) -> Response {
    let Some(handle) = app.store.get(&id) else {
        return not_found(&id);
    };
    // Held across the whole turn, so turns of one session never overlap.
    let mut live = handle.lock_owned().await;
    let worker = app.clone();
    let joined = tokio::task::spawn_blocking(move || {
        let result = live.turn(&worker.engine, worker.backend.as_ref(), &body.text);
        let state = live.state();
        let summary = (state.stage, state.matched_disorder.clone(), state.best_similarity());
        (result, summary)
    })
    .await;
    let (result, (stage, matched_disorder, best_similarity)) = match joined {
        Ok(out) => out,
        Err(err) => return internal(err),
    };
    match result {
        Ok(outcome) => {
            let mut body = json!({
                "reply": outcome.reply.text,
                "stage": stage,
                "best_similarity": best_similarity,
            });
            if let Some(id) = matched_disorder {
                body["matched_disorder"] = json!(id);
            }
            json_response(StatusCode::OK, &body)
        }
        Err(TurnError::Rejected(SessionError::Closed)) => error_response(StatusCode::CONFLICT, "session is closed"),
        Err(TurnError::Rejected(err)) => error_response(StatusCode::UNPROCESSABLE_ENTITY, err.to_string()),
        Err(TurnError::Failed(SessionError::Backend(err))) => json_response(
            StatusCode::BAD_GATEWAY,
            &json!({ "error": err.to_string(), "backend_id": err.backend_id, "stage": stage }),
        ),
        Err(TurnError::Failed(err)) => internal(err),
        Err(err @ TurnError::Log(_)) => internal(err),
    }
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let Some(handle) = app.store.get(&id) else {
        return not_found(&id);
    };
    let live = handle.lock().await;
    let state = live.state();
    let mut body = serde_json::to_value(state).expect("state serializes");
    body["best_similarity"] = json!(state.best_similarity());
    json_response(StatusCode::OK, &body)
}

async fn close_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let Some(handle) = app.store.get(&id) else {
        return not_found(&id);
    };
    let mut live = handle.lock_owned().await;
    let joined = tokio::task::spawn_blocking(move || live.close()).await;
    match joined {
        Ok(Ok(_)) => json_response(StatusCode::OK, &json!({ "session_id": id, "stage": Stage::Closed })),
        Ok(Err(err)) => internal(err),
        Err(err) => internal(err),
    }
}

#[derive(Debug, Deserialize)]
struct EmotionQuery {
    window: Option<usize>,
}

async fn get_emotion(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(query): Query<EmotionQuery>,
) -> Response {
    let Some(handle) = app.store.get(&id) else {
        return not_found(&id);
    };
    let window = query.window.unwrap_or(app.smoothing_window);
    if let Err(err) = validate_window(window) {
        return error_response(StatusCode::BAD_REQUEST, err.to_string());
    }
    let turns: Vec<(usize, String)> = {
        let live = handle.lock().await;
        live.state()
            .transcript
            .iter()
            .enumerate()
            .filter(|(_, t)| t.speaker == Speaker::Client)
            .map(|(i, t)| (i, t.text.clone()))
            .collect()
    };
    let worker = app.clone();
    let joined =
        tokio::task::spawn_blocking(move || session_emotion(&id, &turns, worker.classifier.as_ref(), window)).await;
    match joined {
        Ok(Ok(report)) => json_response(StatusCode::OK, &report),
        Ok(Err(err)) => error_response(StatusCode::BAD_GATEWAY, err.to_string()),
        Err(err) => internal(err),
    }
}
