//! Participant and admin calls against the experiment service.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use mcv_core::results::ResultsDocument;

const ADMIN_TOKEN_HEADER: &str = "x-admin-token";
const RECORDING_ID_HEADER: &str = "x-recording-id";

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{method} {path}: {status} {code}: {message}")]
    Status {
        method: &'static str,
        path: String,
        status: u16,
        code: String,
        message: String,
    },
    #[error("network error: {0}")]
    Network(#[from] reqwest::Error),
    #[error("unexpected response: {0}")]
    Protocol(String),
}

impl ApiError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ApiError::Status { status, .. } => Some(*status),
            _ => None,
        }
    }
}

/// Fields of the session progress document the robot relies on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionProgress {
    pub session_id: String,
    pub experiment_id: String,
    pub lead_sentence: String,
    pub consent_given: bool,
    pub demographics_submitted: bool,
    pub next_position: usize,
    pub total: usize,
    pub awaiting_answer: bool,
    pub complete: bool,
    #[serde(default)]
    pub completion_code: Option<String>,
}

#[derive(Debug, Clone)]
pub struct AudioResponse {
    pub recording_id: Option<String>,
    pub bytes: Vec<u8>,
}

#[derive(Deserialize)]
struct ErrorBody {
    code: String,
    message: String,
}

/// Accepts a bare experiment id, a `/x/<id>` path, or a full shared link.
pub fn experiment_id_from_link(link: &str) -> String {
    let trimmed = link.trim().trim_end_matches('/');
    let without_query = trimmed.split(['?', '#']).next().unwrap_or(trimmed);
    match without_query.rsplit_once("/x/") {
        Some((_, id)) => id.to_string(),
        None => without_query.rsplit('/').next().unwrap_or(without_query).to_string(),
    }
}

#[derive(Debug, Clone)]
pub struct ApiClient {
    base: String,
    http: reqwest::Client,
}

impl ApiClient {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, ApiError> {
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .redirect(reqwest::redirect::Policy::none())
            .build()?;
        Ok(ApiClient {
            base: base_url.trim_end_matches('/').to_string(),
            http,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn check(method: &'static str, path: &str, r: reqwest::Response) -> Result<reqwest::Response, ApiError> {
        let status = r.status();
        if status.is_success() || status.is_redirection() {
            return Ok(r);
        }
        let text = r.text().await.unwrap_or_default();
        let (code, message) = match serde_json::from_str::<ErrorBody>(&text) {
            Ok(b) => (b.code, b.message),
            Err(_) => ("unknown".to_string(), text),
        };
        Err(ApiError::Status {
            method,
            path: path.to_string(),
            status: status.as_u16(),
            code,
            message,
        })
    }

    async fn post_json<T: for<'de> Deserialize<'de>>(&self, path: &str, body: serde_json::Value) -> Result<T, ApiError> {
        let r = self.http.post(format!("{}{path}", self.base)).json(&body).send().await?;
        Ok(Self::check("POST", path, r).await?.json().await?)
    }

    pub async fn create_session(&self, experiment_id: &str) -> Result<SessionProgress, ApiError> {
        self.post_json(&format!("/api/experiments/{experiment_id}/sessions"), json!({})).await
    }

    /// Visits the shared link and returns the session id it hands out.
    pub async fn open_shared_link(&self, experiment_id: &str) -> Result<String, ApiError> {
        let path = format!("/x/{experiment_id}");
        let r = self.http.get(format!("{}{path}", self.base)).send().await?;
        let r = Self::check("GET", &path, r).await?;
        let location = r
            .headers()
            .get(reqwest::header::LOCATION)
            .and_then(|v| v.to_str().ok())
            .ok_or_else(|| ApiError::Protocol(format!("{path} did not redirect")))?;
        location
            .split_once("session=")
            .map(|(_, sid)| sid.split('&').next().unwrap_or(sid).to_string())
            .ok_or_else(|| ApiError::Protocol(format!("no session in redirect {location:?}")))
    }

    pub async fn session(&self, session_id: &str) -> Result<SessionProgress, ApiError> {
        let path = format!("/api/sessions/{session_id}");
        let r = self.http.get(format!("{}{path}", self.base)).send().await?;
        Ok(Self::check("GET", &path, r).await?.json().await?)
    }

    pub async fn consent(&self, session_id: &str) -> Result<SessionProgress, ApiError> {
        self.post_json(&format!("/api/sessions/{session_id}/consent"), json!({})).await
    }

    pub async fn demographics(
        &self,
        session_id: &str,
        fields: &BTreeMap<String, String>,
    ) -> Result<SessionProgress, ApiError> {
        self.post_json(&format!("/api/sessions/{session_id}/demographics"), json!(fields))
            .await
    }

    pub async fn audio(&self, session_id: &str, position: usize) -> Result<AudioResponse, ApiError> {
        let path = format!("/api/sessions/{session_id}/recordings/{position}/audio");
        let r = self.http.get(format!("{}{path}", self.base)).send().await?;
        let r = Self::check("GET", &path, r).await?;
        let recording_id = r
            .headers()
            .get(RECORDING_ID_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        Ok(AudioResponse {
            recording_id,
            bytes: r.bytes().await?.to_vec(),
        })
    }

    pub async fn answer(&self, session_id: &str, position: usize, text: &str) -> Result<serde_json::Value, ApiError> {
        self.post_json(
            &format!("/api/sessions/{session_id}/recordings/{position}/answer"),
            json!({ "text": text }),
        )
        .await
    }

    pub async fn results(&self, experiment_id: &str, admin_token: &str) -> Result<ResultsDocument, ApiError> {
        let path = format!("/api/experiments/{experiment_id}/results");
        let r = self
            .http
            .get(format!("{}{path}", self.base))
            .header(ADMIN_TOKEN_HEADER, admin_token)
            .send()
            .await?;
        Ok(Self::check("GET", &path, r).await?.json().await?)
    }

    /// Builds an experiment from a JSON config; returns the new id.
    pub async fn create_experiment(&self, config: &serde_json::Value, admin_token: &str) -> Result<String, ApiError> {
        let path = "/api/experiments";
        let r = self
            .http
            .post(format!("{}{path}", self.base))
            .header(ADMIN_TOKEN_HEADER, admin_token)
            .json(config)
            .send()
            .await?;
        let body: serde_json::Value = Self::check("POST", path, r).await?.json().await?;
        body["experiment_id"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ApiError::Protocol("missing experiment_id".to_string()))
    }
}
