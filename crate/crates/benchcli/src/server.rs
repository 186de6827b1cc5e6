//! HTTP service backing annotation sessions.
//!
//! Payloads carry only what an annotator needs to answer: an image reference
//! and the grid shape. Ground truth and perturbation parameters never leave
//! the server, and responses are acknowledged without correctness feedback.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use oddgrid_core::gridsynth::{read_metadata, GenError, Split, StimulusRecord};
use serde::{Deserialize, Serialize};

use crate::session::{
    create_session, AnnotationResponse, GridLookup, SessionError, SessionLog, SessionState, DEFAULT_PRACTICE,
};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Directory holding `test/` and `val/` splits.
    pub data_dir: PathBuf,
    pub sessions_dir: PathBuf,
    pub practice: usize,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        let data_dir = data_dir.into();
        Self {
            sessions_dir: data_dir.join("sessions"),
            data_dir,
            practice: DEFAULT_PRACTICE,
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    split: Split,
    rows: usize,
    cols: usize,
    file: String,
    width: u32,
    height: u32,
}

/// Scored (test) and practice (validation) stimuli known to the service.
#[derive(Debug, Default)]
pub struct Catalog {
    pub test: Vec<StimulusRecord>,
    pub val: Vec<StimulusRecord>,
    entries: HashMap<String, Entry>,
}

impl Catalog {
    pub fn new(test: Vec<StimulusRecord>, val: Vec<StimulusRecord>) -> Self {
        let mut entries = HashMap::new();
        for r in test.iter().chain(&val) {
            let grid = r.grid();
            let gutter = if r.labeled {
                oddgrid_core::gridsynth::GUTTER_PX
            } else {
                0
            };
            entries.insert(
                r.id.clone(),
                Entry {
                    split: r.split,
                    rows: r.rows,
                    cols: r.cols,
                    file: Path::new(&r.image_path)
                        .file_name()
                        .map(|f| f.to_string_lossy().into_owned())
                        .unwrap_or_default(),
                    width: grid.width() + gutter,
                    height: grid.height() + gutter,
                },
            );
        }
        Self { test, val, entries }
    }

    /// Reads `test/metadata.jsonl` and, if present, `val/metadata.jsonl`.
    pub fn load(data_dir: &Path) -> Result<Self, GenError> {
        let test = read_metadata(&data_dir.join("test").join("metadata.jsonl"))?;
        let val_path = data_dir.join("val").join("metadata.jsonl");
        let val = if val_path.exists() {
            read_metadata(&val_path)?
        } else {
            Vec::new()
        };
        Ok(Self::new(test, val))
    }
}

impl GridLookup for Catalog {
    fn grid_of(&self, stimulus_id: &str) -> Option<(usize, usize)> {
        self.entries.get(stimulus_id).map(|e| (e.rows, e.cols))
    }
}

type SessionSlot = Arc<tokio::sync::Mutex<(SessionLog, SessionState)>>;

pub struct AppState {
    config: ServiceConfig,
    catalog: Catalog,
    sessions: Mutex<HashMap<String, SessionSlot>>,
}

impl AppState {
    /// Resumes every session already logged under `config.sessions_dir`.
    pub fn new(config: ServiceConfig, catalog: Catalog) -> Result<Arc<Self>, SessionError> {
        std::fs::create_dir_all(&config.sessions_dir)?;
        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(&config.sessions_dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "jsonl") {
                let (log, s) = SessionLog::recover(path)?;
                sessions.insert(s.session_id.clone(), Arc::new(tokio::sync::Mutex::new((log, s))));
            }
        }
        Ok(Arc::new(Self {
            config,
            catalog,
            sessions: Mutex::new(sessions),
        }))
    }

    fn slot(&self, id: &str) -> Result<SessionSlot, ApiError> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()).into())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateSession {
    pub annotator_id: String,
    pub seed: u64,
    #[serde(default)]
    pub practice: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusView {
    pub session_id: String,
    pub annotator_id: String,
    pub answered: usize,
    pub total: usize,
    pub practice: usize,
    pub complete: bool,
}

impl From<&SessionState> for StatusView {
    fn from(s: &SessionState) -> Self {
        Self {
            session_id: s.session_id.clone(),
            annotator_id: s.annotator_id.clone(),
            answered: s.cursor,
            total: s.items.len(),
            practice: s.practice_count(),
            complete: s.is_complete(),
        }
    }
}

/// The stimulus an annotator should answer next.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextItem {
    pub stimulus_id: String,
    /// 1-based position in the session.
    pub position: usize,
    pub total: usize,
    pub practice: bool,
    pub image_url: String,
    pub width: u32,
    pub height: u32,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextView {
    pub session_id: String,
    pub complete: bool,
    pub item: Option<NextItem>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ResponseBody {
    pub stimulus_id: String,
    pub row: usize,
    pub col: usize,
    #[serde(default)]
    pub latency_ms: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AckView {
    pub accepted: bool,
    pub answered: usize,
    pub remaining: usize,
    pub complete: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorView {
    pub error: String,
    pub kind: String,
}

pub struct ApiError(StatusCode, ErrorView);

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let (status, kind) = match &e {
            SessionError::UnknownSession(_) | SessionError::UnknownStimulus(_) => (StatusCode::NOT_FOUND, "not_found"),
            SessionError::OutOfOrder { .. } => (StatusCode::CONFLICT, "out_of_order"),
            SessionError::DuplicateResponse(_) => (StatusCode::CONFLICT, "duplicate_response"),
            SessionError::SessionComplete => (StatusCode::CONFLICT, "session_complete"),
            SessionError::OutOfBoundsCell { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "out_of_bounds_cell"),
            SessionError::InsufficientSamples { .. } | SessionError::InsufficientPractice { .. } => {
                (StatusCode::UNPROCESSABLE_ENTITY, "insufficient_samples")
            }
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError(
            status,
            ErrorView {
                error: e.to_string(),
                kind: kind.to_string(),
            },
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

async fn create(
    State(app): State<Arc<AppState>>,
    Json(body): Json<CreateSession>,
) -> Result<(StatusCode, Json<StatusView>), ApiError> {
    if body.annotator_id.trim().is_empty() {
        return Err(ApiError(
            StatusCode::BAD_REQUEST,
            ErrorView {
                error: "annotator_id is empty".into(),
                kind: "bad_request".into(),
            },
        ));
    }
    let id = uuid::Uuid::new_v4().simple().to_string();
    let state = create_session(
        &id,
        &body.annotator_id,
        body.seed,
        &app.catalog.test,
        &app.catalog.val,
        body.practice.unwrap_or(app.config.practice),
    )?;
    let log = SessionLog::create(&app.config.sessions_dir, &state)?;
    let view = StatusView::from(&state);
    app.sessions
        .lock()
        .unwrap()
        .insert(id, Arc::new(tokio::sync::Mutex::new((log, state))));
    Ok((StatusCode::CREATED, Json(view)))
}

async fn next(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<NextView>, ApiError> {
    let slot = app.slot(&id)?;
    let guard = slot.lock().await;
    let state = &guard.1;
    let item = match state.current() {
        None => None,
        Some(item) => {
            let e = app
                .catalog
                .entries
                .get(&item.stimulus_id)
                .ok_or_else(|| SessionError::UnknownStimulus(item.stimulus_id.clone()))?;
            Some(NextItem {
                stimulus_id: item.stimulus_id.clone(),
                position: state.cursor + 1,
                total: state.items.len(),
                practice: item.practice,
                image_url: format!("/images/{}/{}", e.split, e.file),
                width: e.width,
                height: e.height,
                rows: e.rows,
                cols: e.cols,
            })
        }
    };
    Ok(Json(NextView {
        session_id: id,
        complete: item.is_none(),
        item,
    }))
}

async fn respond(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<ResponseBody>,
) -> Result<Json<AckView>, ApiError> {
    let slot = app.slot(&id)?;
    let mut guard = slot.lock().await;
    let (log, state) = &mut *guard;
    let ack = log.record(
        state,
        AnnotationResponse {
            stimulus_id: body.stimulus_id,
            row: body.row,
            col: body.col,
            latency_ms: body.latency_ms,
            timestamp_ms: now_ms(),
        },
        &app.catalog,
    )?;
    Ok(Json(AckView {
        accepted: true,
        answered: ack.cursor,
        remaining: ack.remaining,
        complete: ack.complete,
    }))
}

async fn status(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<StatusView>, ApiError> {
    let slot = app.slot(&id)?;
    let guard = slot.lock().await;
    Ok(Json(StatusView::from(&guard.1)))
}

async fn image(State(app): State<Arc<AppState>>, UrlPath((split, file)): UrlPath<(String, String)>) -> Response {
    let split_ok = matches!(split.as_str(), "test" | "val");
    let file_ok = file.ends_with(".png") && !file.contains(['/', '\\']) && !file.starts_with('.');
    if !split_ok || !file_ok {
        return StatusCode::NOT_FOUND.into_response();
    }
    match tokio::fs::read(app.config.data_dir.join(&split).join("images").join(&file)).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "image/png")], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/responses", post(respond))
        .route("/sessions/{id}/status", get(status))
        .route("/images/{split}/{file}", get(image))
        .with_state(app)
}

/// Serves until the process receives Ctrl-C.
pub async fn serve(addr: SocketAddr, app: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
