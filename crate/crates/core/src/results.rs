//! The admin results export: every session's answers joined with the
//! recording conditions and ground truths.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::manifest::ExperimentManifest;
use crate::model::SubjectType;
use crate::scoring::{levenshtein, ScoreReport, DISTANCE_CAP};
use crate::session::Session;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingSummary {
    pub recording_id: String,
    pub codec: String,
    pub burst_k: u32,
    pub p_gb: f64,
    pub p_bg: f64,
    pub frame_drop_p: f64,
    pub ground_truth: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRow {
    pub position: usize,
    pub recording_id: String,
    pub subject_type: SubjectType,
    pub submitted_text: String,
    pub normalized_plate: String,
    pub submitted_at: DateTime<Utc>,
    pub codec: String,
    pub burst_k: u32,
    pub p_gb: f64,
    pub frame_drop_p: f64,
    pub ground_truth: Option<String>,
    pub levenshtein_raw: Option<usize>,
    pub truncated_distance: Option<usize>,
    pub correct: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResults {
    pub session_id: String,
    pub subject_type: SubjectType,
    pub demographics: BTreeMap<String, String>,
    pub created_at: DateTime<Utc>,
    pub complete: bool,
    pub answers: Vec<AnswerRow>,
    /// With-truth scores over the answered recordings that have a ground truth.
    pub score: Option<ScoreReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsDocument {
    pub experiment_id: String,
    pub exported_at: DateTime<Utc>,
    pub lead_sentence: String,
    pub recordings: Vec<RecordingSummary>,
    pub sessions: Vec<SessionResults>,
}

pub fn build_results(
    manifest: &ExperimentManifest,
    sessions: &[Session],
    exported_at: DateTime<Utc>,
) -> ResultsDocument {
    let recordings = manifest
        .recordings
        .iter()
        .map(|r| RecordingSummary {
            recording_id: r.id.clone(),
            codec: r.impairment.codec.clone(),
            burst_k: r.impairment.burst_k,
            p_gb: r.impairment.p_gb,
            p_bg: r.impairment.p_bg,
            frame_drop_p: r.impairment.frame_drop_p,
            ground_truth: r.ground_truth.as_ref().map(ToString::to_string),
        })
        .collect();

    let sessions = sessions
        .iter()
        .map(|s| {
            let answers: Vec<AnswerRow> = s
                .order
                .iter()
                .enumerate()
                .filter_map(|(position, &idx)| {
                    let rec = &manifest.recordings[idx];
                    let answer = s.answers.get(&rec.id)?;
                    let truth = rec.ground_truth.as_ref().map(ToString::to_string);
                    let raw = truth
                        .as_deref()
                        .map(|t| levenshtein(&answer.normalized_plate, t));
                    Some(AnswerRow {
                        position,
                        recording_id: rec.id.clone(),
                        subject_type: answer.subject_type.clone(),
                        submitted_text: answer.submitted_text.clone(),
                        normalized_plate: answer.normalized_plate.clone(),
                        submitted_at: answer.submitted_at,
                        codec: rec.impairment.codec.clone(),
                        burst_k: rec.impairment.burst_k,
                        p_gb: rec.impairment.p_gb,
                        frame_drop_p: rec.impairment.frame_drop_p,
                        correct: truth.as_deref().map(|t| answer.normalized_plate == t),
                        ground_truth: truth,
                        levenshtein_raw: raw,
                        truncated_distance: raw.map(|d| d.min(DISTANCE_CAP)),
                    })
                })
                .collect();
            let score = ScoreReport::with_truth(answers.iter().filter_map(|a| {
                a.ground_truth
                    .as_deref()
                    .map(|t| (a.recording_id.as_str(), a.normalized_plate.as_str(), t))
            }))
            .ok();
            SessionResults {
                session_id: s.id.clone(),
                subject_type: s.subject_type.clone(),
                demographics: s.demographics.clone().unwrap_or_default(),
                created_at: s.created_at,
                complete: s.is_complete(manifest),
                answers,
                score,
            }
        })
        .collect();

    ResultsDocument {
        experiment_id: manifest.id.clone(),
        exported_at,
        lead_sentence: manifest.lead_sentence.clone(),
        recordings,
        sessions,
    }
}
