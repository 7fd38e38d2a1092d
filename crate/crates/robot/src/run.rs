//! One robot pass through a session, resumable from a progress file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use mcv_core::fsutil::write_atomic;
use mcv_core::scoring::{ScoreReport, TokenAggregation};
use mcv_core::session::SUBJECT_TYPE_KEY;
use mcv_core::{MatchMetric, SubjectType, TokenMatch, TranscriptParser};

use crate::client::{experiment_id_from_link, ApiClient, ApiError, SessionProgress};
use crate::engine::{EngineAdapter, TranscriptionRequest};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub metric: MatchMetric,
    pub aggregation: TokenAggregation,
    /// Enables the with-truth report from the admin export.
    pub admin_token: Option<String>,
    /// Where progress is kept between interrupted runs.
    pub progress_path: Option<PathBuf>,
    pub http_timeout: Duration,
    /// Sent in addition to the subject type.
    pub demographics: BTreeMap<String, String>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            metric: MatchMetric::default(),
            aggregation: TokenAggregation::default(),
            admin_token: None,
            progress_path: None,
            http_timeout: Duration::from_secs(60),
            demographics: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotRecording {
    pub position: usize,
    pub recording_id: Option<String>,
    pub transcript: String,
    pub submitted_text: String,
    pub matches: Vec<TokenMatch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotRunReport {
    pub experiment_id: String,
    pub session_id: String,
    pub subject_type: SubjectType,
    pub metric: MatchMetric,
    pub recordings: Vec<RobotRecording>,
    pub engine_failures: usize,
    /// Per-token best LevScores; needs no ground truth.
    pub without_truth: Option<ScoreReport>,
    /// From the admin export; present only when an admin token was given.
    pub with_truth: Option<ScoreReport>,
    pub completion_code: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Api(#[from] ApiError),
    #[error("progress file {path}: {message}")]
    Progress { path: PathBuf, message: String },
    #[error("session {0} is missing from the results export")]
    MissingFromExport(String),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Progress {
    base_url: String,
    experiment_id: String,
    session_id: Option<String>,
    recordings: Vec<RobotRecording>,
    /// Transcribed but possibly not yet submitted.
    pending: Option<RobotRecording>,
}

struct ProgressFile {
    path: Option<PathBuf>,
    state: Progress,
}

impl ProgressFile {
    fn load(path: Option<&Path>, base_url: &str, experiment_id: &str) -> Result<Self, RunError> {
        let fresh = Progress {
            base_url: base_url.to_string(),
            experiment_id: experiment_id.to_string(),
            ..Progress::default()
        };
        let state = match path {
            Some(p) if p.exists() => {
                let err = |message: String| RunError::Progress {
                    path: p.to_path_buf(),
                    message,
                };
                let text = std::fs::read_to_string(p).map_err(|e| err(e.to_string()))?;
                let stored: Progress = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
                if stored.base_url != base_url || stored.experiment_id != experiment_id {
                    return Err(err(format!(
                        "belongs to experiment {} at {}",
                        stored.experiment_id, stored.base_url
                    )));
                }
                stored
            }
            _ => fresh,
        };
        Ok(ProgressFile {
            path: path.map(Path::to_path_buf),
            state,
        })
    }

    fn save(&self) -> Result<(), RunError> {
        let Some(path) = &self.path else { return Ok(()) };
        let json = serde_json::to_vec_pretty(&self.state).expect("progress serializes");
        write_atomic(path, &json).map_err(|e| RunError::Progress {
            path: path.clone(),
            message: e.to_string(),
        })
    }
}

async fn start_session(client: &ApiClient, link: &str, experiment_id: &str) -> Result<String, ApiError> {
    if link.contains("/x/") {
        client.open_shared_link(experiment_id).await
    } else {
        Ok(client.create_session(experiment_id).await?.session_id)
    }
}

/// Walks one session to completion: consent, demographics marked as a
/// robot, then fetch, transcribe, parse and submit for every position.
///
/// Engine failures submit an empty answer and the run continues. A network
/// failure aborts the run; with a progress file the next call resumes the
/// same session where it stopped.
pub async fn run_session(
    base_url: &str,
    experiment_link: &str,
    engine: &dyn EngineAdapter,
    options: &RunOptions,
) -> Result<RobotRunReport, RunError> {
    let client = ApiClient::new(base_url, options.http_timeout)?;
    let experiment_id = experiment_id_from_link(experiment_link);
    let mut progress = ProgressFile::load(options.progress_path.as_deref(), client.base_url(), &experiment_id)?;
    let subject = SubjectType::robot(engine.label());

    let session_id = match progress.state.session_id.clone() {
        Some(sid) => sid,
        None => {
            let sid = start_session(&client, experiment_link, &experiment_id).await?;
            progress.state.session_id = Some(sid.clone());
            progress.save()?;
            sid
        }
    };

    let mut view = client.session(&session_id).await?;
    if !view.consent_given {
        view = client.consent(&session_id).await?;
    }
    if !view.demographics_submitted {
        let mut fields = options.demographics.clone();
        fields.insert(SUBJECT_TYPE_KEY.to_string(), subject.to_string());
        view = client.demographics(&session_id, &fields).await?;
    }

    let parser = TranscriptParser::new(options.metric).with_lead(&view.lead_sentence);
    while !view.complete {
        let position = view.next_position;
        let record = match progress.state.pending.take() {
            Some(p) if p.position == position => p,
            _ if view.awaiting_answer => RobotRecording {
                position,
                recording_id: None,
                transcript: String::new(),
                submitted_text: String::new(),
                matches: Vec::new(),
                engine_error: Some("audio was delivered before an interruption; transcript lost".to_string()),
            },
            _ => {
                let audio = client.audio(&session_id, position).await?;
                let record = transcribe(engine, &parser, position, audio.recording_id, audio.bytes).await;
                progress.state.pending = Some(record.clone());
                progress.save()?;
                record
            }
        };
        match client.answer(&session_id, position, &record.submitted_text).await {
            Ok(_) => {}
            // Submitted before an interruption, progress not yet saved.
            Err(e) if e.status() == Some(409) => {}
            Err(e) => {
                progress.state.pending = Some(record);
                progress.save()?;
                return Err(e.into());
            }
        }
        progress.state.recordings.push(record);
        progress.state.pending = None;
        progress.save()?;
        view = client.session(&session_id).await?;
    }

    report(&client, &session_id, &experiment_id, subject, view, progress.state.recordings, options).await
}

async fn transcribe(
    engine: &dyn EngineAdapter,
    parser: &TranscriptParser,
    position: usize,
    recording_id: Option<String>,
    audio: Vec<u8>,
) -> RobotRecording {
    let request = TranscriptionRequest {
        position,
        recording_id: recording_id.clone(),
        audio,
    };
    let (transcript, engine_error) = match engine.transcribe(&request).await {
        Ok(text) => (text, None),
        Err(e) => {
            tracing::warn!(position, error = %e, "engine failed; submitting an empty answer");
            (String::new(), Some(e.to_string()))
        }
    };
    let parsed = parser.parse(&transcript);
    RobotRecording {
        position,
        recording_id,
        transcript,
        submitted_text: parsed.plate,
        matches: parsed.matches,
        engine_error,
    }
}

async fn report(
    client: &ApiClient,
    session_id: &str,
    experiment_id: &str,
    subject_type: SubjectType,
    view: SessionProgress,
    mut recordings: Vec<RobotRecording>,
    options: &RunOptions,
) -> Result<RobotRunReport, RunError> {
    recordings.sort_by_key(|r| r.position);
    let labels: Vec<String> = recordings
        .iter()
        .map(|r| r.recording_id.clone().unwrap_or_else(|| format!("position-{}", r.position)))
        .collect();
    let without_truth = ScoreReport::without_truth(
        labels.iter().zip(&recordings).map(|(id, r)| (id.as_str(), r.matches.as_slice())),
        options.aggregation,
    )
    .ok();
    let with_truth = match &options.admin_token {
        Some(token) => {
            let doc = client.results(experiment_id, token).await?;
            let session = doc
                .sessions
                .into_iter()
                .find(|s| s.session_id == session_id)
                .ok_or_else(|| RunError::MissingFromExport(session_id.to_string()))?;
            session.score
        }
        None => None,
    };
    Ok(RobotRunReport {
        experiment_id: experiment_id.to_string(),
        session_id: session_id.to_string(),
        subject_type,
        metric: options.metric,
        engine_failures: recordings.iter().filter(|r| r.engine_error.is_some()).count(),
        recordings,
        without_truth,
        with_truth,
        completion_code: view.completion_code,
    })
}
