//! HTTP service for live adaptive lottery-choice sessions.
//!
//! Every session writes an append-only NDJSON log under the data directory
//! and syncs it before answering; on startup all logs are replayed.

pub mod error;
pub mod session;

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ecd_core::econ::{Choice, ChoiceModel, EconConfig};
use rand::Rng;
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

pub use error::ServiceError;
pub use session::{LogRecord, PairView, PosteriorView, Session, SessionConfig, Status};

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    pub data_dir: PathBuf,
    /// Config for `POST /sessions` requests that do not carry one.
    pub default_config: SessionConfig,
    /// Allow cross-origin requests from any origin.
    pub cors: bool,
}

struct Slot {
    /// Serializes mutations; a second concurrent mutation gets a conflict.
    writer: tokio::sync::Mutex<Session>,
    /// Last committed state, read without touching the writer lock.
    view: RwLock<Snapshot>,
}

#[derive(Clone)]
struct Snapshot {
    posterior: PosteriorView,
    log: String,
}

impl Snapshot {
    fn of(session: &Session) -> Self {
        Self {
            posterior: session.posterior_view(),
            log: session::to_ndjson(session.records()),
        }
    }
}

struct Inner {
    options: ServiceOptions,
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
    models: Mutex<HashMap<String, Arc<ChoiceModel>>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn log_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.ndjson"))
}

fn append_durably(path: &Path, records: &[LogRecord], create: bool) -> Result<(), ServiceError> {
    let mut file = OpenOptions::new()
        .append(true)
        .create_new(create)
        .open(path)?;
    file.write_all(session::to_ndjson(records).as_bytes())?;
    file.sync_data()?;
    Ok(())
}

impl AppState {
    /// Opens the data directory and replays every session log in it.
    pub fn open(options: ServiceOptions) -> Result<Self, ServiceError> {
        std::fs::create_dir_all(&options.data_dir)?;
        let state = AppState(Arc::new(Inner {
            options,
            sessions: RwLock::new(HashMap::new()),
            models: Mutex::new(HashMap::new()),
        }));
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&state.0.options.data_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
            .collect();
        paths.sort();
        for path in paths {
            let text = std::fs::read_to_string(&path)?;
            let records = session::parse_log(&text)?;
            let session = Session::replay(&records, |c| state.model(c))
                .map_err(|e| ServiceError::Replay(format!("{}: {e}", path.display())))?;
            state.insert(session);
        }
        Ok(state)
    }

    fn model(&self, config: &EconConfig) -> Result<Arc<ChoiceModel>, ServiceError> {
        let key = serde_json::to_string(config).map_err(|e| ServiceError::Internal(e.to_string()))?;
        let mut models = self.0.models.lock().expect("model cache poisoned");
        if let Some(m) = models.get(&key) {
            return Ok(m.clone());
        }
        let model = Arc::new(ChoiceModel::new(config.clone()).map_err(|e| ServiceError::BadRequest(e.to_string()))?);
        models.insert(key, model.clone());
        Ok(model)
    }

    fn insert(&self, session: Session) {
        let slot = Arc::new(Slot {
            view: RwLock::new(Snapshot::of(&session)),
            writer: tokio::sync::Mutex::new(session),
        });
        let id = slot.view.read().expect("snapshot poisoned").posterior.session_id.clone();
        self.0.sessions.write().expect("session map poisoned").insert(id, slot);
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ServiceError> {
        self.0
            .sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    pub fn session_count(&self) -> usize {
        self.0.sessions.read().expect("session map poisoned").len()
    }

    pub fn create_session(&self, config: Option<SessionConfig>) -> Result<CreateResponse, ServiceError> {
        let config = config.unwrap_or_else(|| self.0.options.default_config.clone());
        let model = self.model(&config.econ)?;
        let id = format!("{:032x}", rand::thread_rng().gen::<u128>());
        let (session, records) = Session::create(id.clone(), config, model, now_ms())?;
        append_durably(&log_path(&self.0.options.data_dir, &id), &records, true)?;
        let response = CreateResponse {
            session_id: id,
            test: session.pending().expect("a new session has a pending test"),
            budget: session.config().budget,
        };
        self.insert(session);
        Ok(response)
    }

    pub fn submit_answer(&self, id: &str, choice: Choice) -> Result<AnswerResponse, ServiceError> {
        let slot = self.slot(id)?;
        let mut guard = slot
            .writer
            .try_lock()
            .map_err(|_| ServiceError::Conflict("another request is updating this session".into()))?;
        let mut next = guard.clone();
        let records = next.answer(choice, now_ms())?;
        append_durably(&log_path(&self.0.options.data_dir, id), &records, false)?;
        *guard = next;
        let snapshot = Snapshot::of(&guard);
        *slot.view.write().expect("snapshot poisoned") = snapshot.clone();
        Ok(AnswerResponse {
            posterior: snapshot.posterior,
            next_test: guard.pending(),
            completed: guard.status() == Status::Completed,
        })
    }

    pub fn posterior(&self, id: &str) -> Result<PosteriorView, ServiceError> {
        let slot = self.slot(id)?;
        let view = slot.view.read().expect("snapshot poisoned");
        Ok(view.posterior.clone())
    }

    pub fn export_log(&self, id: &str) -> Result<String, ServiceError> {
        let slot = self.slot(id)?;
        let view = slot.view.read().expect("snapshot poisoned");
        Ok(view.log.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateResponse {
    pub session_id: String,
    pub test: PairView,
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub posterior: PosteriorView,
    pub next_test: Option<PairView>,
    pub completed: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateBody {
    #[serde(default)]
    config: Option<SessionConfig>,
}

async fn create_handler(State(state): State<AppState>, body: Bytes) -> Result<Response, ServiceError> {
    let config = if body.iter().all(u8::is_ascii_whitespace) {
        None
    } else {
        let parsed: CreateBody =
            serde_json::from_slice(&body).map_err(|e| ServiceError::BadRequest(format!("invalid body: {e}")))?;
        parsed.config
    };
    let response = state.create_session(config)?;
    Ok((StatusCode::CREATED, Json(response)).into_response())
}

async fn answer_handler(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<AnswerResponse>, ServiceError> {
    let value: serde_json::Value =
        serde_json::from_slice(&body).map_err(|e| ServiceError::Validation(format!("invalid body: {e}")))?;
    let choice = match value.get("choice").and_then(serde_json::Value::as_u64) {
        Some(1) => Choice::First,
        Some(2) => Choice::Second,
        _ => return Err(ServiceError::Validation("choice must be 1 or 2".into())),
    };
    Ok(Json(state.submit_answer(&id, choice)?))
}

async fn posterior_handler(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<PosteriorView>, ServiceError> {
    Ok(Json(state.posterior(&id)?))
}

async fn log_handler(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ServiceError> {
    let log = state.export_log(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], log).into_response())
}

pub fn router(state: AppState) -> Router {
    let cors = state.0.options.cors;
    let app = Router::new()
        .route("/sessions", post(create_handler))
        .route("/sessions/{id}/answer", post(answer_handler))
        .route("/sessions/{id}/posterior", get(posterior_handler))
        .route("/sessions/{id}/log", get(log_handler))
        .with_state(state);
    if cors {
        app.layer(CorsLayer::permissive())
    } else {
        app
    }
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
