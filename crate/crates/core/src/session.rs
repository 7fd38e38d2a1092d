//! A participant's pass through an experiment and the rules it must follow:
//! consent, then demographics, then trials in session order, each recording
//! played at most once and answered at most once, only after it was played.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::manifest::{ExperimentManifest, RecordingEntry};
use crate::model::{AnswerRecord, SubjectType};

/// Demographics key that marks a robot participant, e.g. `robot:mock`.
pub const SUBJECT_TYPE_KEY: &str = "subject_type";

/// Suggested demographics keys shown by the web UI. Any keys are accepted.
pub const SUGGESTED_DEMOGRAPHICS: [&str; 5] =
    ["age_range", "gender", "native_language", "hearing_impairment", "audio_device"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlayState {
    #[default]
    Unplayed,
    Played,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("consent has not been given")]
    ConsentRequired,
    #[error("demographics have not been submitted")]
    DemographicsRequired,
    #[error("consent was already given")]
    ConsentAlreadyGiven,
    #[error("demographics were already submitted")]
    DemographicsAlreadySubmitted,
    #[error("position {position} is out of range (total {total})")]
    PositionOutOfRange { position: usize, total: usize },
    #[error("recording at position {0} was already played")]
    AlreadyPlayed(usize),
    #[error("position {requested} is not next; next position is {next}")]
    OutOfOrder { requested: usize, next: usize },
    #[error("recording at position {0} has not been played")]
    NotPlayed(usize),
    #[error("recording at position {0} was already answered")]
    AlreadyAnswered(usize),
    #[error("invalid subject type: {0}")]
    SubjectType(String),
}

impl SessionError {
    /// Rule violations against state that has already moved on.
    pub fn is_conflict(&self) -> bool {
        matches!(
            self,
            SessionError::AlreadyPlayed(_)
                | SessionError::AlreadyAnswered(_)
                | SessionError::ConsentAlreadyGiven
                | SessionError::DemographicsAlreadySubmitted
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub experiment_id: String,
    /// `order[position]` is an index into the manifest's recordings.
    pub order: Vec<usize>,
    pub consent_given: bool,
    pub demographics: Option<BTreeMap<String, String>>,
    pub subject_type: SubjectType,
    pub answers: BTreeMap<String, AnswerRecord>,
    pub play_state: BTreeMap<String, PlayState>,
    pub created_at: DateTime<Utc>,
    pub completion_code: String,
}

impl Session {
    /// A fresh session with a random recording order.
    pub fn new<R: Rng + ?Sized>(
        id: impl Into<String>,
        manifest: &ExperimentManifest,
        completion_code: impl Into<String>,
        created_at: DateTime<Utc>,
        rng: &mut R,
    ) -> Self {
        let mut order: Vec<usize> = (0..manifest.recordings.len()).collect();
        order.shuffle(rng);
        Session {
            id: id.into(),
            experiment_id: manifest.id.clone(),
            order,
            consent_given: false,
            demographics: None,
            subject_type: SubjectType::Human,
            answers: BTreeMap::new(),
            play_state: manifest
                .recordings
                .iter()
                .map(|r| (r.id.clone(), PlayState::Unplayed))
                .collect(),
            created_at,
            completion_code: completion_code.into(),
        }
    }

    pub fn total(&self) -> usize {
        self.order.len()
    }

    fn recording_id_at<'m>(&self, manifest: &'m ExperimentManifest, position: usize) -> Result<&'m RecordingEntry, SessionError> {
        self.order
            .get(position)
            .and_then(|&idx| manifest.recordings.get(idx))
            .ok_or(SessionError::PositionOutOfRange {
                position,
                total: self.total(),
            })
    }

    fn is_played(&self, recording_id: &str) -> bool {
        self.play_state.get(recording_id) == Some(&PlayState::Played)
    }

    /// First position without an answer; equals `total()` when finished.
    pub fn next_position(&self, manifest: &ExperimentManifest) -> usize {
        self.order
            .iter()
            .position(|&idx| !self.answers.contains_key(&manifest.recordings[idx].id))
            .unwrap_or(self.total())
    }

    /// True when the next recording was delivered but not yet answered.
    pub fn awaiting_answer(&self, manifest: &ExperimentManifest) -> bool {
        let next = self.next_position(manifest);
        next < self.total() && self.is_played(&manifest.recordings[self.order[next]].id)
    }

    pub fn is_complete(&self, manifest: &ExperimentManifest) -> bool {
        self.next_position(manifest) == self.total()
    }

    pub fn give_consent(&mut self) -> Result<(), SessionError> {
        if self.consent_given {
            return Err(SessionError::ConsentAlreadyGiven);
        }
        self.consent_given = true;
        Ok(())
    }

    /// Stores demographics. A `subject_type` entry of the form `robot:<label>`
    /// marks the session as a robot run.
    pub fn submit_demographics(&mut self, fields: BTreeMap<String, String>) -> Result<(), SessionError> {
        if !self.consent_given {
            return Err(SessionError::ConsentRequired);
        }
        if self.demographics.is_some() {
            return Err(SessionError::DemographicsAlreadySubmitted);
        }
        if let Some(raw) = fields.get(SUBJECT_TYPE_KEY) {
            self.subject_type = raw
                .parse()
                .map_err(|e: crate::model::SubjectTypeError| SessionError::SubjectType(e.to_string()))?;
        }
        self.demographics = Some(fields);
        Ok(())
    }

    fn ensure_ready(&self) -> Result<(), SessionError> {
        if !self.consent_given {
            return Err(SessionError::ConsentRequired);
        }
        if self.demographics.is_none() {
            return Err(SessionError::DemographicsRequired);
        }
        Ok(())
    }

    /// Marks the recording at `position` as played and returns it. The caller
    /// must persist the session before handing out any audio.
    pub fn begin_play<'m>(
        &mut self,
        manifest: &'m ExperimentManifest,
        position: usize,
    ) -> Result<&'m RecordingEntry, SessionError> {
        self.ensure_ready()?;
        let rec = self.recording_id_at(manifest, position)?;
        if self.is_played(&rec.id) {
            return Err(SessionError::AlreadyPlayed(position));
        }
        let next = self.next_position(manifest);
        if position != next {
            return Err(SessionError::OutOfOrder {
                requested: position,
                next,
            });
        }
        self.play_state.insert(rec.id.clone(), PlayState::Played);
        Ok(rec)
    }

    pub fn record_answer(
        &mut self,
        manifest: &ExperimentManifest,
        position: usize,
        text: &str,
        submitted_at: DateTime<Utc>,
    ) -> Result<AnswerRecord, SessionError> {
        self.ensure_ready()?;
        let rec = self.recording_id_at(manifest, position)?;
        if self.answers.contains_key(&rec.id) {
            return Err(SessionError::AlreadyAnswered(position));
        }
        if !self.is_played(&rec.id) {
            return Err(SessionError::NotPlayed(position));
        }
        let answer = AnswerRecord::new(rec.id.clone(), text, self.subject_type.clone(), submitted_at);
        self.answers.insert(rec.id.clone(), answer.clone());
        Ok(answer)
    }

    /// Returns a description of every broken structural invariant.
    pub fn invariant_violations(&self, manifest: &ExperimentManifest) -> Vec<String> {
        let mut out = Vec::new();
        let mut sorted = self.order.clone();
        sorted.sort_unstable();
        if sorted != (0..manifest.recordings.len()).collect::<Vec<_>>() {
            out.push("order is not a permutation of the recordings".to_string());
        }
        for id in self.answers.keys() {
            if !self.is_played(id) {
                out.push(format!("answer for unplayed recording {id:?}"));
            }
        }
        out
    }
}
