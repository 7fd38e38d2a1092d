//! Edit distance and the accuracy metrics built on it.

use serde::{Deserialize, Serialize};

use crate::model::normalize_answer;
use crate::parser::TokenMatch;

/// Cap for truncated distances: the length of a full plate.
pub const DISTANCE_CAP: usize = 6;

/// Minimum number of single-character insertions, deletions and
/// substitutions turning `a` into `b`. Operates on Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (short, long) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
    if short.is_empty() {
        return long.len();
    }
    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut cur = vec![0; short.len() + 1];
    for (i, lc) in long.iter().enumerate() {
        cur[0] = i + 1;
        for (j, sc) in short.iter().enumerate() {
            let substitution = prev[j] + usize::from(lc != sc);
            cur[j + 1] = substitution.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// `1 - lev(x, token) / max(len)`; two empty strings score 1.
pub fn lev_score(x: &str, token: &str) -> f64 {
    let longest = x.chars().count().max(token.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(x, token) as f64 / longest as f64
}

/// Per-recording score against a known answer. Both sides are normalized
/// (uppercase, letters and digits only) before comparison.
pub fn score_with_truth(number: &str, correct: &str) -> f64 {
    lev_score(&normalize_answer(number), &normalize_answer(correct))
}

/// How per-token scores combine into a per-recording score when no
/// ground truth is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenAggregation {
    /// Mean of token scores; stays in `[0, 1]`.
    #[default]
    Mean,
    /// Plain sum of token scores. Unbounded; kept for compatibility.
    Sum,
}

pub fn score_without_truth(matches: &[TokenMatch], aggregation: TokenAggregation) -> f64 {
    if matches.is_empty() {
        return 0.0;
    }
    let total: f64 = matches.iter().map(|m| m.best_lev_score).sum();
    match aggregation {
        TokenAggregation::Mean => total / matches.len() as f64,
        TokenAggregation::Sum => total,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScoringError {
    #[error("experiment score needs at least one recording")]
    Empty,
    #[error("distance cap must be at least 1")]
    ZeroCap,
}

pub fn experiment_score(per_recording: &[f64]) -> Result<f64, ScoringError> {
    if per_recording.is_empty() {
        return Err(ScoringError::Empty);
    }
    Ok(per_recording.iter().sum::<f64>() / per_recording.len() as f64)
}

/// `min(lev(answer, correct), cap)` on normalized strings.
pub fn truncated_distance(answer: &str, correct: &str, cap: usize) -> Result<usize, ScoringError> {
    if cap == 0 {
        return Err(ScoringError::ZeroCap);
    }
    Ok(levenshtein(&normalize_answer(answer), &normalize_answer(correct)).min(cap))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    WithGroundTruth,
    WithoutGroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingScore {
    pub recording_id: String,
    pub score: f64,
    /// Raw and capped distances; absent without ground truth.
    pub levenshtein_raw: Option<usize>,
    pub levenshtein_truncated: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub mode: ScoreMode,
    pub per_recording: Vec<RecordingScore>,
    pub experiment_score: f64,
}

impl ScoreReport {
    /// Rows are `(recording_id, answer, ground_truth)`.
    pub fn with_truth<'a, I>(rows: I) -> Result<Self, ScoringError>
    where
        I: IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    {
        let per_recording: Vec<RecordingScore> = rows
            .into_iter()
            .map(|(id, answer, truth)| {
                let raw = levenshtein(&normalize_answer(answer), &normalize_answer(truth));
                RecordingScore {
                    recording_id: id.to_string(),
                    score: score_with_truth(answer, truth),
                    levenshtein_raw: Some(raw),
                    levenshtein_truncated: Some(raw.min(DISTANCE_CAP)),
                }
            })
            .collect();
        Self::assemble(ScoreMode::WithGroundTruth, per_recording)
    }

    /// Rows are `(recording_id, token matches)`.
    pub fn without_truth<'a, I>(rows: I, aggregation: TokenAggregation) -> Result<Self, ScoringError>
    where
        I: IntoIterator<Item = (&'a str, &'a [TokenMatch])>,
    {
        let per_recording = rows
            .into_iter()
            .map(|(id, matches)| RecordingScore {
                recording_id: id.to_string(),
                score: score_without_truth(matches, aggregation),
                levenshtein_raw: None,
                levenshtein_truncated: None,
            })
            .collect();
        Self::assemble(ScoreMode::WithoutGroundTruth, per_recording)
    }

    fn assemble(mode: ScoreMode, per_recording: Vec<RecordingScore>) -> Result<Self, ScoringError> {
        let scores: Vec<f64> = per_recording.iter().map(|r| r.score).collect();
        Ok(ScoreReport {
            mode,
            experiment_score: experiment_score(&scores)?,
            per_recording,
        })
    }
}
