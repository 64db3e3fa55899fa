//! HTTP/JSON session service over the game engine: create games, open cells,
//! step agents and store finished human demonstrations.

mod session;
mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path as FsPath, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hypsearch::grid::{EpisodeStatus, GridCell};
use hypsearch::learning::LinearModel;
use hypsearch::{Agent, AgentKind, ModelKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use session::{AgentFailure, Mode, OpenedCell, Session, SessionConfig, StateView, StepOutcome};
pub use store::{DemoStore, FailureRecord, DEMO_FILE, FAILURE_FILE};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("cell {0} is already opened")]
    AlreadyOpened(GridCell),
    #[error("episode is over ({0:?})")]
    EpisodeOver(EpisodeStatus),
    #[error("{0}")]
    WrongMode(String),
    #[error("session is still running")]
    StillRunning,
    #[error("session was already finalized")]
    AlreadyFinalized,
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Internal(String),
    #[error("storage: {0}")]
    Storage(String),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::AlreadyOpened(_)
            | ServiceError::EpisodeOver(_)
            | ServiceError::WrongMode(_)
            | ServiceError::StillRunning
            | ServiceError::AlreadyFinalized => StatusCode::CONFLICT,
            ServiceError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Internal(_) | ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::AlreadyOpened(_) => "already_opened",
            ServiceError::EpisodeOver(_) => "episode_over",
            ServiceError::WrongMode(_) => "wrong_mode",
            ServiceError::StillRunning => "still_running",
            ServiceError::AlreadyFinalized => "already_finalized",
            ServiceError::Invalid(_) => "invalid_request",
            ServiceError::Internal(_) => "internal",
            ServiceError::Storage(_) => "storage",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        if self.status().is_server_error() {
            log::error!("{self}");
        }
        let body = ErrorBody {
            error: self.code().into(),
            message: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateResponse {
    pub id: String,
    pub state: StateView,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OpenRequest {
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentStepRequest {
    pub agent: AgentKind,
    /// File name of a model in the models directory.
    #[serde(default)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentStepResponse {
    #[serde(flatten)]
    pub step: StepOutcome,
    pub state: StateView,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalizeResponse {
    pub status: EpisodeStatus,
    /// Rows appended to the demonstration store (zero for failed games).
    pub stored_rows: usize,
    pub stored_failure: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    pub kind: ModelKind,
    pub dataset: Option<String>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub models_dir: PathBuf,
    pub data_dir: PathBuf,
}

type Shared = Arc<Mutex<Session>>;

#[derive(Clone)]
pub struct AppState {
    sessions: Arc<Mutex<HashMap<String, Shared>>>,
    store: Arc<DemoStore>,
    models_dir: Arc<PathBuf>,
}

impl AppState {
    pub fn new(cfg: ServiceConfig) -> Self {
        Self {
            sessions: Arc::default(),
            store: Arc::new(DemoStore::new(cfg.data_dir)),
            models_dir: Arc::new(cfg.models_dir),
        }
    }

    pub fn store(&self) -> &DemoStore {
        &self.store
    }

    fn session(&self, id: &str) -> Result<Shared, ServiceError> {
        self.sessions
            .lock()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    fn load_model(&self, name: &str) -> Result<LinearModel<f64>, ServiceError> {
        let path = model_path(&self.models_dir, name)?;
        LinearModel::load(&path).map_err(|e| ServiceError::Invalid(format!("model {name}: {e}")))
    }
}

fn model_path(dir: &FsPath, name: &str) -> Result<PathBuf, ServiceError> {
    let plain = !name.is_empty()
        && !name.starts_with('.')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c));
    if !plain {
        return Err(ServiceError::Invalid(format!("bad model name {name:?}")));
    }
    Ok(dir.join(name))
}

fn body<T>(req: Result<Json<T>, JsonRejection>) -> Result<T, ServiceError> {
    req.map(|Json(v)| v).map_err(|e| ServiceError::Invalid(e.body_text()))
}

fn lock(s: &Shared) -> std::sync::MutexGuard<'_, Session> {
    s.lock().expect("session poisoned")
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/models", get(list_models))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/open", post(open_cell))
        .route("/sessions/{id}/agent-step", post(agent_step))
        .route("/sessions/{id}/finalize", post(finalize))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn list_models(State(app): State<AppState>) -> Json<Vec<ModelInfo>> {
    let mut out = Vec::new();
    let Ok(entries) = std::fs::read_dir(app.models_dir.as_path()) else {
        return Json(out);
    };
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    for p in paths {
        let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
        match LinearModel::<f64>::load(&p) {
            Ok(m) => out.push(ModelInfo {
                name,
                kind: m.kind,
                dataset: m.fingerprint.as_ref().map(|f| f.dataset.clone()),
                rows: m.fingerprint.as_ref().map(|f| f.config.rows),
                cols: m.fingerprint.as_ref().map(|f| f.config.cols),
            }),
            Err(e) => log::warn!("skipping {}: {e}", p.display()),
        }
    }
    Json(out)
}

async fn create_session(
    State(app): State<AppState>,
    cfg: Result<Json<SessionConfig>, JsonRejection>,
) -> Result<(StatusCode, Json<CreateResponse>), ServiceError> {
    let cfg = body(cfg)?;
    let uuid = uuid::Uuid::new_v4();
    let (hi, lo) = uuid.as_u64_pair();
    let id = uuid.simple().to_string();
    let session = Session::create(id.clone(), hi, &cfg, lo)?;
    let state = session.view();
    app.sessions
        .lock()
        .expect("session table poisoned")
        .insert(id.clone(), Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(CreateResponse { id, state })))
}

async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<StateView>, ServiceError> {
    let s = app.session(&id)?;
    let view = lock(&s).view();
    Ok(Json(view))
}

async fn open_cell(
    State(app): State<AppState>,
    Path(id): Path<String>,
    req: Result<Json<OpenRequest>, JsonRejection>,
) -> Result<Json<StateView>, ServiceError> {
    let req = body(req)?;
    let s = app.session(&id)?;
    let mut g = lock(&s);
    g.open(GridCell::new(req.row, req.col))?;
    Ok(Json(g.view()))
}

async fn agent_step(
    State(app): State<AppState>,
    Path(id): Path<String>,
    req: Result<Json<AgentStepRequest>, JsonRejection>,
) -> Result<Json<AgentStepResponse>, ServiceError> {
    let req = body(req)?;
    let s = app.session(&id)?;
    let model = match (&req.model, req.agent.model_kind()) {
        (Some(name), Some(_)) => Some(app.load_model(name)?),
        _ => None,
    };
    let mut g = lock(&s);
    let agent = Agent::new(req.agent, model)
        .map_err(|e| ServiceError::Invalid(e.to_string()))?
        .with_masking(g.config().mc_masking);
    if let Some(mismatch) = agent.model().and_then(|m| m.fingerprint_mismatch(&g.config().fingerprint())) {
        log::warn!("session {id}: {mismatch}");
    }
    let step = g.agent_step(&agent)?;
    Ok(Json(AgentStepResponse { step, state: g.view() }))
}

async fn finalize(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<FinalizeResponse>, ServiceError> {
    let s = app.session(&id)?;
    let mut g = lock(&s);
    let (status, demo) = g.take_demonstration()?;
    let resp = if status == EpisodeStatus::Success {
        app.store.append_success(&demo)?;
        FinalizeResponse { status, stored_rows: demo.steps.len(), stored_failure: false }
    } else {
        app.store.append_failure(&FailureRecord::new(g.id(), status, g.state().steps(), &demo))?;
        FinalizeResponse { status, stored_rows: 0, stored_failure: true }
    };
    Ok(Json(resp))
}
