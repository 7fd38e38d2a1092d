//! Directory-per-experiment persistence.
//!
//! ```text
//! <root>/experiments/<id>/manifest.json
//! <root>/experiments/<id>/audio/*.wav
//! <root>/experiments/<id>/sessions/<session-id>.json
//! ```
//!
//! Manifests are immutable once built. Each session document is rewritten
//! whole through temp-file-and-rename, so a crash leaves either the old or
//! the new state on disk. Mutations of one session are serialized by its
//! own lock; there is no global lock.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use dashmap::DashMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use mcv_core::fsutil::write_atomic;
use mcv_core::manifest::MANIFEST_FILE;
use mcv_core::results::{build_results, ResultsDocument};
use mcv_core::{AnswerRecord, ExperimentManifest, Session, SubjectType};

use crate::build::build_experiment;
use crate::config::{is_safe_id, ExperimentConfig};
use crate::error::ServiceError;

const EXPERIMENTS_DIR: &str = "experiments";
const SESSIONS_DIR: &str = "sessions";

#[derive(Debug)]
struct Experiment {
    manifest: ExperimentManifest,
    dir: PathBuf,
}

#[derive(Debug)]
struct SessionSlot {
    experiment: Arc<Experiment>,
    session: Mutex<Session>,
}

/// What a participant may see about their own session. Carries no ground
/// truth and no condition parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub experiment_id: String,
    pub lead_sentence: String,
    pub consent_given: bool,
    pub demographics_submitted: bool,
    pub subject_type: SubjectType,
    pub next_position: usize,
    pub total: usize,
    /// The recording at `next_position` was delivered and awaits its answer.
    pub awaiting_answer: bool,
    pub complete: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub completion_code: Option<String>,
}

impl SessionView {
    fn of(session: &Session, manifest: &ExperimentManifest) -> Self {
        let complete = session.is_complete(manifest);
        SessionView {
            session_id: session.id.clone(),
            experiment_id: session.experiment_id.clone(),
            lead_sentence: manifest.lead_sentence.clone(),
            consent_given: session.consent_given,
            demographics_submitted: session.demographics.is_some(),
            subject_type: session.subject_type.clone(),
            next_position: session.next_position(manifest),
            total: session.total(),
            awaiting_answer: session.awaiting_answer(manifest),
            complete,
            completion_code: complete.then(|| session.completion_code.clone()),
        }
    }
}

/// Audio handed out by a successful fetch.
#[derive(Debug, Clone)]
pub struct AudioPayload {
    pub recording_id: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    experiments: DashMap<String, Arc<Experiment>>,
    sessions: DashMap<String, Arc<SessionSlot>>,
}

fn internal(context: &str) -> impl FnOnce(std::io::Error) -> ServiceError + '_ {
    move |e| ServiceError::Internal(format!("{context}: {e}"))
}

fn is_temp_name(name: &str) -> bool {
    name.starts_with('.')
}

impl Store {
    /// Opens or creates a store. Leftover staging directories and temp
    /// files from an interrupted run are removed.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let root = root.into();
        let experiments_dir = root.join(EXPERIMENTS_DIR);
        fs::create_dir_all(&experiments_dir).map_err(internal("creating data directory"))?;
        let store = Store {
            root,
            experiments: DashMap::new(),
            sessions: DashMap::new(),
        };
        for entry in fs::read_dir(&experiments_dir).map_err(internal("listing experiments"))? {
            let entry = entry.map_err(internal("listing experiments"))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if is_temp_name(&name) {
                let _ = fs::remove_dir_all(entry.path());
                continue;
            }
            store.load_experiment(&entry.path())?;
        }
        Ok(store)
    }

    fn load_experiment(&self, dir: &Path) -> Result<(), ServiceError> {
        let manifest = ExperimentManifest::load(&dir.join(MANIFEST_FILE))
            .map_err(|e| ServiceError::Internal(format!("loading {}: {e}", dir.display())))?;
        let experiment = Arc::new(Experiment {
            manifest,
            dir: dir.to_path_buf(),
        });
        let sessions_dir = dir.join(SESSIONS_DIR);
        fs::create_dir_all(&sessions_dir).map_err(internal("creating sessions directory"))?;
        for entry in fs::read_dir(&sessions_dir).map_err(internal("listing sessions"))? {
            let path = entry.map_err(internal("listing sessions"))?.path();
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            if is_temp_name(&name) {
                let _ = fs::remove_file(&path);
                continue;
            }
            let text = fs::read_to_string(&path).map_err(internal("reading session"))?;
            let session: Session = serde_json::from_str(&text)
                .map_err(|e| ServiceError::Internal(format!("parsing {}: {e}", path.display())))?;
            self.sessions.insert(
                session.id.clone(),
                Arc::new(SessionSlot {
                    experiment: experiment.clone(),
                    session: Mutex::new(session),
                }),
            );
        }
        self.experiments.insert(experiment.manifest.id.clone(), experiment);
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn experiment_dir(&self, id: &str) -> PathBuf {
        self.root.join(EXPERIMENTS_DIR).join(id)
    }

    /// Builds and registers a new experiment. Blocking.
    pub fn create_experiment(&self, config: &ExperimentConfig) -> Result<ExperimentManifest, ServiceError> {
        let id = config.id.clone().unwrap_or_else(|| uuid::Uuid::new_v4().simple().to_string());
        if !is_safe_id(&id) {
            return Err(ServiceError::BadRequest(format!("invalid experiment id {id:?}")));
        }
        if self.experiments.contains_key(&id) {
            return Err(ServiceError::Conflict(format!("experiment {id} already exists")));
        }
        let dir = self.experiment_dir(&id);
        let manifest = build_experiment(config, &id, Utc::now(), &dir)?;
        fs::create_dir_all(dir.join(SESSIONS_DIR)).map_err(internal("creating sessions directory"))?;
        self.experiments.insert(
            id,
            Arc::new(Experiment {
                manifest: manifest.clone(),
                dir,
            }),
        );
        Ok(manifest)
    }

    pub fn manifest(&self, experiment_id: &str) -> Option<ExperimentManifest> {
        self.experiments.get(experiment_id).map(|e| e.manifest.clone())
    }

    pub fn experiment_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.experiments.iter().map(|e| e.key().clone()).collect();
        ids.sort();
        ids
    }

    fn experiment(&self, id: &str) -> Result<Arc<Experiment>, ServiceError> {
        self.experiments
            .get(id)
            .map(|e| e.value().clone())
            .ok_or_else(|| ServiceError::NotFound(format!("no experiment {id}")))
    }

    fn slot(&self, session_id: &str) -> Result<Arc<SessionSlot>, ServiceError> {
        self.sessions
            .get(session_id)
            .map(|s| s.value().clone())
            .ok_or_else(|| ServiceError::NotFound("no such session".to_string()))
    }

    fn persist(experiment: &Experiment, session: &Session) -> Result<(), ServiceError> {
        let path = experiment.dir.join(SESSIONS_DIR).join(format!("{}.json", session.id));
        let json = serde_json::to_vec_pretty(session).map_err(|e| ServiceError::Internal(e.to_string()))?;
        write_atomic(&path, &json).map_err(internal("writing session"))
    }

    /// Fresh session with an unguessable id and a random order, persisted
    /// before it is returned.
    pub fn create_session(&self, experiment_id: &str) -> Result<SessionView, ServiceError> {
        let experiment = self.experiment(experiment_id)?;
        let mut rng = rand::thread_rng();
        let id = uuid::Uuid::new_v4().simple().to_string();
        let code = format!("{:08X}", rng.gen::<u32>());
        let session = Session::new(id.clone(), &experiment.manifest, code, Utc::now(), &mut rng);
        Self::persist(&experiment, &session)?;
        let view = SessionView::of(&session, &experiment.manifest);
        self.sessions.insert(
            id,
            Arc::new(SessionSlot {
                experiment,
                session: Mutex::new(session),
            }),
        );
        Ok(view)
    }

    /// Applies `f` to a copy of the session, persists the copy, then makes
    /// it current. A failure at any step leaves the session unchanged.
    fn mutate<T>(
        &self,
        session_id: &str,
        f: impl FnOnce(&mut Session, &ExperimentManifest) -> Result<T, ServiceError>,
    ) -> Result<T, ServiceError> {
        let slot = self.slot(session_id)?;
        let mut current = slot.session.lock().unwrap_or_else(|p| p.into_inner());
        let mut next = current.clone();
        let out = f(&mut next, &slot.experiment.manifest)?;
        Self::persist(&slot.experiment, &next)?;
        *current = next;
        Ok(out)
    }

    pub fn session_view(&self, session_id: &str) -> Result<SessionView, ServiceError> {
        let slot = self.slot(session_id)?;
        let session = slot.session.lock().unwrap_or_else(|p| p.into_inner());
        Ok(SessionView::of(&session, &slot.experiment.manifest))
    }

    pub fn give_consent(&self, session_id: &str) -> Result<SessionView, ServiceError> {
        self.mutate(session_id, |s, m| {
            s.give_consent()?;
            Ok(SessionView::of(s, m))
        })
    }

    pub fn submit_demographics(
        &self,
        session_id: &str,
        fields: BTreeMap<String, String>,
    ) -> Result<SessionView, ServiceError> {
        self.mutate(session_id, |s, m| {
            s.submit_demographics(fields)?;
            Ok(SessionView::of(s, m))
        })
    }

    /// Delivers the recording at `position` once. The played mark is on
    /// disk before the bytes are returned.
    pub fn fetch_audio(&self, session_id: &str, position: usize) -> Result<AudioPayload, ServiceError> {
        self.mutate(session_id, |s, m| {
            let rec = s.begin_play(m, position)?.clone();
            let path = self.experiment_dir(&m.id).join(&rec.audio_path);
            let bytes = fs::read(&path).map_err(internal("reading audio"))?;
            Ok(AudioPayload {
                recording_id: rec.id,
                bytes,
            })
        })
    }

    pub fn submit_answer(&self, session_id: &str, position: usize, text: &str) -> Result<AnswerRecord, ServiceError> {
        self.mutate(session_id, |s, m| Ok(s.record_answer(m, position, text, Utc::now())?))
    }

    pub fn sessions_of(&self, experiment_id: &str) -> Vec<Session> {
        let mut out: Vec<Session> = self
            .sessions
            .iter()
            .filter(|s| s.experiment.manifest.id == experiment_id)
            .map(|s| s.session.lock().unwrap_or_else(|p| p.into_inner()).clone())
            .collect();
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        out
    }

    pub fn export_results(&self, experiment_id: &str, at: DateTime<Utc>) -> Result<ResultsDocument, ServiceError> {
        let experiment = self.experiment(experiment_id)?;
        Ok(build_results(&experiment.manifest, &self.sessions_of(experiment_id), at))
    }
}
