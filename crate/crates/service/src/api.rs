//! HTTP surface. Paths:
//!
//! ```text
//! POST /api/experiments                                 admin
//! GET  /api/experiments/{id}/results                    admin
//! POST /api/experiments/{id}/sessions
//! GET  /x/{id}                                          shared link, 303 to the UI
//! GET  /api/sessions/{sid}
//! POST /api/sessions/{sid}/consent
//! POST /api/sessions/{sid}/demographics
//! GET  /api/sessions/{sid}/recordings/{pos}/audio
//! POST /api/sessions/{sid}/recordings/{pos}/answer
//! ```

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Redirect, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use mcv_core::results::ResultsDocument;
use mcv_core::AnswerRecord;

use crate::config::ExperimentConfig;
use crate::error::ServiceError;
use crate::store::{SessionView, Store};

pub const ADMIN_TOKEN_HEADER: &str = "x-admin-token";
/// Set on audio responses so a machine subject can label its transcripts.
pub const RECORDING_ID_HEADER: &str = "x-recording-id";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub bind: SocketAddr,
    /// Admin endpoints answer 401 when unset.
    pub admin_token: Option<String>,
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub admin_token: Option<String>,
}

impl AppState {
    pub fn new(store: Store, admin_token: Option<String>) -> Self {
        AppState {
            store: Arc::new(store),
            admin_token: admin_token.filter(|t| !t.is_empty()),
        }
    }

    fn check_admin(&self, headers: &HeaderMap) -> Result<(), ServiceError> {
        let expected = self.admin_token.as_deref().ok_or(ServiceError::Unauthorized)?;
        let given = headers
            .get(ADMIN_TOKEN_HEADER)
            .and_then(|v| v.to_str().ok())
            .or_else(|| {
                headers
                    .get(header::AUTHORIZATION)
                    .and_then(|v| v.to_str().ok())
                    .and_then(|v| v.strip_prefix("Bearer "))
            })
            .ok_or(ServiceError::Unauthorized)?;
        if constant_time_eq(given.as_bytes(), expected.as_bytes()) {
            Ok(())
        } else {
            Err(ServiceError::Unauthorized)
        }
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// Runs blocking store work off the async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> Result<T, ServiceError> {
    body.map(|Json(v)| v).map_err(|e| ServiceError::BadRequest(e.body_text()))
}

fn parse_position(raw: &str) -> Result<usize, ServiceError> {
    raw.parse()
        .map_err(|_| ServiceError::BadRequest(format!("position {raw:?} is not a non-negative integer")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCreated {
    pub experiment_id: String,
    pub n_recordings: usize,
    /// Shared participant link, relative to the service root.
    pub link: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerBody {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub answer: AnswerRecord,
    pub next_position: usize,
    pub complete: bool,
}

async fn create_experiment(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Result<Json<ExperimentConfig>, JsonRejection>,
) -> Result<(StatusCode, Json<ExperimentCreated>), ServiceError> {
    state.check_admin(&headers)?;
    let config = json_body(body)?;
    let store = state.store.clone();
    let manifest = blocking(move || store.create_experiment(&config)).await?;
    Ok((
        StatusCode::CREATED,
        Json(ExperimentCreated {
            link: format!("/x/{}", manifest.id),
            n_recordings: manifest.recordings.len(),
            experiment_id: manifest.id,
        }),
    ))
}

async fn results(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<ResultsDocument>, ServiceError> {
    state.check_admin(&headers)?;
    let store = state.store.clone();
    Ok(Json(blocking(move || store.export_results(&id, Utc::now())).await?))
}

async fn create_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<(StatusCode, Json<SessionView>), ServiceError> {
    let store = state.store.clone();
    let view = blocking(move || store.create_session(&id)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn shared_link(State(state): State<AppState>, Path(id): Path<String>) -> Result<Redirect, ServiceError> {
    let store = state.store.clone();
    let view = blocking(move || store.create_session(&id)).await?;
    Ok(Redirect::to(&format!("/?session={}", view.session_id)))
}

async fn session(State(state): State<AppState>, Path(sid): Path<String>) -> Result<Json<SessionView>, ServiceError> {
    Ok(Json(state.store.session_view(&sid)?))
}

async fn consent(State(state): State<AppState>, Path(sid): Path<String>) -> Result<Json<SessionView>, ServiceError> {
    let store = state.store.clone();
    Ok(Json(blocking(move || store.give_consent(&sid)).await?))
}

async fn demographics(
    State(state): State<AppState>,
    Path(sid): Path<String>,
    body: Result<Json<BTreeMap<String, String>>, JsonRejection>,
) -> Result<Json<SessionView>, ServiceError> {
    let fields = json_body(body)?;
    let store = state.store.clone();
    Ok(Json(blocking(move || store.submit_demographics(&sid, fields)).await?))
}

async fn audio(
    State(state): State<AppState>,
    Path((sid, pos)): Path<(String, String)>,
) -> Result<Response, ServiceError> {
    let position = parse_position(&pos)?;
    let store = state.store.clone();
    let payload = blocking(move || store.fetch_audio(&sid, position)).await?;
    let mut response = payload.bytes.into_response();
    let headers = response.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("audio/wav"));
    headers.insert(header::CACHE_CONTROL, HeaderValue::from_static("no-store"));
    if let Ok(v) = HeaderValue::from_str(&payload.recording_id) {
        headers.insert(RECORDING_ID_HEADER, v);
    }
    Ok(response)
}

async fn answer(
    State(state): State<AppState>,
    Path((sid, pos)): Path<(String, String)>,
    body: Result<Json<AnswerBody>, JsonRejection>,
) -> Result<Json<AnswerResponse>, ServiceError> {
    let position = parse_position(&pos)?;
    let AnswerBody { text } = json_body(body)?;
    let store = state.store.clone();
    let (answer, view) = blocking(move || {
        let answer = store.submit_answer(&sid, position, &text)?;
        Ok((answer, store.session_view(&sid)?))
    })
    .await?;
    Ok(Json(AnswerResponse {
        answer,
        next_position: view.next_position,
        complete: view.complete,
    }))
}

async fn api_not_found() -> ServiceError {
    ServiceError::NotFound("no such endpoint".to_string())
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/experiments", post(create_experiment))
        .route("/api/experiments/{id}/results", get(results))
        .route("/api/experiments/{id}/sessions", post(create_session))
        .route("/api/sessions/{sid}", get(session))
        .route("/api/sessions/{sid}/consent", post(consent))
        .route("/api/sessions/{sid}/demographics", post(demographics))
        .route("/api/sessions/{sid}/recordings/{pos}/audio", get(audio))
        .route("/api/sessions/{sid}/recordings/{pos}/answer", post(answer))
        .route("/api/{*rest}", axum::routing::any(api_not_found))
        .route("/x/{id}", get(shared_link))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until ctrl-c.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let store = Store::open(&config.data_dir).map_err(std::io::Error::other)?;
    let app = router(AppState::new(store, config.admin_token), config.static_dir);
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
