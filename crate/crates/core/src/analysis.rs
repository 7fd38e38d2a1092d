//! Descriptive analysis of exported results and Benjamini-Hochberg
//! adjustment of externally computed p-values.
//!
//! CSV layouts (header row included, column order fixed):
//!
//! * cells: `codec,burst_k,subject_type,n_trials,mean_truncated_distance,mean_normalized_distance,mean_correctness`
//! * trials: `session_id,subject_type,codec,burst_k,frame_drop_p,recording_id,truncated_distance,normalized_distance,correct`

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::model::{normalize_answer, SubjectType};
use crate::results::ResultsDocument;
use crate::scoring::{levenshtein, DISTANCE_CAP};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("malformed results: {0}")]
    Malformed(String),
    #[error("p-value #{index} = {value} is outside [0, 1]")]
    PValue { index: usize, value: f64 },
    #[error("alpha = {0} must be strictly between 0 and 1")]
    Alpha(f64),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// One answered trial with its distance to the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub session_id: String,
    pub subject_type: SubjectType,
    pub codec: String,
    pub burst_k: u32,
    pub frame_drop_p: f64,
    pub recording_id: String,
    pub truncated_distance: usize,
    pub normalized_distance: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCell {
    pub codec: String,
    pub burst_k: u32,
    pub subject_type: SubjectType,
    pub n_trials: usize,
    pub mean_truncated_distance: f64,
    pub mean_normalized_distance: f64,
    pub mean_correctness: f64,
}

/// Flattens a results document into trial rows. Distances are recomputed
/// from the stored answer and ground truth rather than trusted.
pub fn trials(doc: &ResultsDocument) -> Result<Vec<TrialRow>, AnalysisError> {
    let known: BTreeMap<&str, &crate::results::RecordingSummary> = doc
        .recordings
        .iter()
        .map(|r| (r.recording_id.as_str(), r))
        .collect();
    let mut rows = Vec::new();
    for session in &doc.sessions {
        for answer in &session.answers {
            let rec = known.get(answer.recording_id.as_str()).ok_or_else(|| {
                AnalysisError::Malformed(format!(
                    "session {} answers unknown recording {:?}",
                    session.session_id, answer.recording_id
                ))
            })?;
            let truth = answer
                .ground_truth
                .as_deref()
                .or(rec.ground_truth.as_deref())
                .ok_or_else(|| {
                    AnalysisError::Malformed(format!("recording {:?} has no ground truth", rec.recording_id))
                })?;
            let normalized = normalize_answer(&answer.normalized_plate);
            let truncated = levenshtein(&normalized, &normalize_answer(truth)).min(DISTANCE_CAP);
            rows.push(TrialRow {
                session_id: session.session_id.clone(),
                subject_type: answer.subject_type.clone(),
                codec: answer.codec.clone(),
                burst_k: answer.burst_k,
                frame_drop_p: answer.frame_drop_p,
                recording_id: answer.recording_id.clone(),
                truncated_distance: truncated,
                normalized_distance: truncated as f64 / DISTANCE_CAP as f64,
                correct: normalized == normalize_answer(truth),
            });
        }
    }
    Ok(rows)
}

/// One cell per `(codec, burst_k, subject_type)` present in the data,
/// sorted by that key.
pub fn tabulate(doc: &ResultsDocument) -> Result<Vec<ConditionCell>, AnalysisError> {
    Ok(tabulate_trials(&trials(doc)?))
}

pub fn tabulate_trials(rows: &[TrialRow]) -> Vec<ConditionCell> {
    let mut groups: BTreeMap<(String, u32, SubjectType), Vec<&TrialRow>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.codec.clone(), row.burst_k, row.subject_type.clone()))
            .or_default()
            .push(row);
    }
    groups
        .into_iter()
        .map(|((codec, burst_k, subject_type), rows)| {
            let n = rows.len() as f64;
            let mean_truncated = rows.iter().map(|r| r.truncated_distance as f64).sum::<f64>() / n;
            ConditionCell {
                codec,
                burst_k,
                subject_type,
                n_trials: rows.len(),
                mean_truncated_distance: mean_truncated,
                mean_normalized_distance: mean_truncated / DISTANCE_CAP as f64,
                mean_correctness: rows.iter().filter(|r| r.correct).count() as f64 / n,
            }
        })
        .collect()
}

pub fn write_trials_csv<W: Write>(rows: &[TrialRow], out: W) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record([
            "session_id",
            "subject_type",
            "codec",
            "burst_k",
            "frame_drop_p",
            "recording_id",
            "truncated_distance",
            "normalized_distance",
            "correct",
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cells_csv<W: Write>(cells: &[ConditionCell], out: W) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    for cell in cells {
        w.serialize(cell)?;
    }
    if cells.is_empty() {
        w.write_record([
            "codec",
            "burst_k",
            "subject_type",
            "n_trials",
            "mean_truncated_distance",
            "mean_normalized_distance",
            "mean_correctness",
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BhResult {
    pub rejected: Vec<bool>,
    pub adjusted: Vec<f64>,
}

/// Benjamini-Hochberg step-up procedure. Outputs follow the input order.
pub fn bh_adjust(p_values: &[f64], alpha: f64) -> Result<BhResult, AnalysisError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AnalysisError::Alpha(alpha));
    }
    for (index, &value) in p_values.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(AnalysisError::PValue { index, value });
        }
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));

    let cutoff = (1..=m)
        .rev()
        .find(|&rank| p_values[order[rank - 1]] <= rank as f64 / m as f64 * alpha);

    let mut rejected = vec![false; m];
    if let Some(last) = cutoff {
        for &idx in &order[..last] {
            rejected[idx] = true;
        }
    }

    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (1..=m).rev() {
        let idx = order[rank - 1];
        running = running.min((m as f64 / rank as f64 * p_values[idx]).min(1.0));
        adjusted[idx] = running;
    }
    Ok(BhResult { rejected, adjusted })
}

/// One p-value per line; blank lines and `#` comments ignored.
pub fn parse_p_values(text: &str) -> Result<Vec<f64>, AnalysisError> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.parse::<f64>()
                .map_err(|e| AnalysisError::Malformed(format!("p-value {l:?}: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::results::{AnswerRow, RecordingSummary, SessionResults};
    use chrono::Utc;
    use proptest::prelude::*;

    fn summary(id: &str, codec: &str, k: u32, truth: &str) -> RecordingSummary {
        RecordingSummary {
            recording_id: id.into(),
            codec: codec.into(),
            burst_k: k,
            p_gb: 0.01,
            p_bg: 0.99,
            frame_drop_p: 0.0,
            ground_truth: Some(truth.into()),
        }
    }

    fn row(rec: &RecordingSummary, subject: &SubjectType, answer: &str) -> AnswerRow {
        AnswerRow {
            position: 0,
            recording_id: rec.recording_id.clone(),
            subject_type: subject.clone(),
            submitted_text: answer.into(),
            normalized_plate: normalize_answer(answer),
            submitted_at: Utc::now(),
            codec: rec.codec.clone(),
            burst_k: rec.burst_k,
            p_gb: rec.p_gb,
            frame_drop_p: rec.frame_drop_p,
            ground_truth: rec.ground_truth.clone(),
            levenshtein_raw: None,
            truncated_distance: None,
            correct: None,
        }
    }

    fn doc(answers: &[(&str, &str)]) -> ResultsDocument {
        // Twelve trials: two subjects x six recordings over a 2x3 condition grid.
        let recordings = vec![
            summary("r0", "p25", 1, "A12BCD"),
            summary("r1", "p25", 4, "B34CDE"),
            summary("r2", "p25", 10, "C56DEF"),
            summary("r3", "amr", 1, "D78EFG"),
            summary("r4", "amr", 4, "E90FGH"),
            summary("r5", "amr", 10, "F11GHI"),
        ];
        let subjects = [SubjectType::Human, SubjectType::robot("mock")];
        let sessions = subjects
            .iter()
            .enumerate()
            .map(|(si, subject)| SessionResults {
                session_id: format!("s{si}"),
                subject_type: subject.clone(),
                demographics: Default::default(),
                created_at: Utc::now(),
                complete: true,
                answers: recordings
                    .iter()
                    .map(|r| {
                        let text = answers
                            .iter()
                            .find(|(key, _)| *key == format!("s{si}/{}", r.recording_id))
                            .map(|(_, a)| *a)
                            .unwrap_or(r.ground_truth.as_deref().unwrap());
                        row(r, subject, text)
                    })
                    .collect(),
                score: None,
            })
            .collect();
        ResultsDocument {
            experiment_id: "exp".into(),
            exported_at: Utc::now(),
            lead_sentence: String::new(),
            recordings,
            sessions,
        }
    }

    #[test]
    fn all_correct() {
        let cells = tabulate(&doc(&[])).unwrap();
        assert_eq!(cells.len(), 12);
        for c in &cells {
            assert_eq!(c.n_trials, 1);
            assert_eq!(c.mean_truncated_distance, 0.0);
            assert_eq!(c.mean_normalized_distance, 0.0);
            assert_eq!(c.mean_correctness, 1.0);
        }
    }

    #[test]
    fn all_empty() {
        let mut d = doc(&[]);
        for s in &mut d.sessions {
            for a in &mut s.answers {
                a.normalized_plate.clear();
            }
        }
        for c in tabulate(&d).unwrap() {
            assert_eq!(c.mean_truncated_distance, 6.0);
            assert_eq!(c.mean_normalized_distance, 1.0);
            assert_eq!(c.mean_correctness, 0.0);
        }
    }

    #[test]
    fn hand_computed_cells() {
        // Human misses on r1 (one substitution) and r2 (empty);
        // robot answers r1 with a 10-character string (distance capped).
        let d = doc(&[("s0/r1", "B34CDF"), ("s0/r2", ""), ("s1/r1", "ZZZZZZZZZZ")]);
        let rows = trials(&d).unwrap();
        assert_eq!(rows.len(), 12);
        let cells = tabulate(&d).unwrap();
        let find = |codec: &str, k: u32, s: &SubjectType| {
            cells
                .iter()
                .find(|c| c.codec == codec && c.burst_k == k && &c.subject_type == s)
                .unwrap()
                .clone()
        };
        let human = SubjectType::Human;
        let robot = SubjectType::robot("mock");
        assert_eq!(find("p25", 4, &human).mean_truncated_distance, 1.0);
        assert!((find("p25", 4, &human).mean_normalized_distance - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(find("p25", 4, &human).mean_correctness, 0.0);
        assert_eq!(find("p25", 10, &human).mean_truncated_distance, 6.0);
        assert_eq!(find("p25", 4, &robot).mean_truncated_distance, 6.0);
        assert_eq!(find("p25", 1, &robot).mean_correctness, 1.0);
        assert_eq!(cells.iter().map(|c| c.n_trials).sum::<usize>(), rows.len());
    }

    #[test]
    fn malformed_results_rejected() {
        let mut d = doc(&[]);
        d.sessions[0].answers[0].recording_id = "ghost".into();
        assert!(matches!(trials(&d), Err(AnalysisError::Malformed(_))));

        let mut d = doc(&[]);
        d.recordings[0].ground_truth = None;
        d.sessions[0].answers[0].ground_truth = None;
        assert!(matches!(tabulate(&d), Err(AnalysisError::Malformed(_))));
    }

    #[test]
    fn csv_headers_stable() {
        let mut buf = Vec::new();
        write_cells_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap().trim(),
            "codec,burst_k,subject_type,n_trials,mean_truncated_distance,mean_normalized_distance,mean_correctness"
        );
        let rows = trials(&doc(&[])).unwrap();
        let mut buf = Vec::new();
        write_trials_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "session_id,subject_type,codec,burst_k,frame_drop_p,recording_id,truncated_distance,normalized_distance,correct"
        );
        assert_eq!(lines.next().unwrap(), "s0,human,p25,1,0.0,r0,0,0.0,true");
        assert_eq!(lines.count(), 11);
    }

    #[test]
    fn bh_examples() {
        let r = bh_adjust(&[0.01, 0.02, 0.04, 0.30], 0.05).unwrap();
        assert_eq!(r.rejected, [true, true, false, false]);
        // adjusted: 0.30*4/4=0.30, 0.04*4/3, 0.02*4/2=0.04, 0.01*4/1=0.04 -> running minima
        let want = [0.04, 0.04, 0.04 * 4.0 / 3.0, 0.30];
        for (got, want) in r.adjusted.iter().zip(want) {
            assert!((got - want).abs() < 1e-12, "{got} {want}");
        }
        let r = bh_adjust(&[0.0; 5], 0.05).unwrap();
        assert!(r.rejected.iter().all(|&x| x));
        assert!(r.adjusted.iter().all(|&x| x == 0.0));
        assert_eq!(bh_adjust(&[0.04], 0.05).unwrap().rejected, [true]);
        assert!(bh_adjust(&[], 0.05).unwrap().rejected.is_empty());
    }

    #[test]
    fn bh_errors() {
        assert!(matches!(bh_adjust(&[1.2], 0.05), Err(AnalysisError::PValue { index: 0, .. })));
        assert!(matches!(bh_adjust(&[f64::NAN], 0.05), Err(AnalysisError::PValue { .. })));
        assert!(matches!(bh_adjust(&[0.1], 0.0), Err(AnalysisError::Alpha(_))));
        assert!(matches!(bh_adjust(&[0.1], 1.0), Err(AnalysisError::Alpha(_))));
    }

    #[test]
    fn p_value_file() {
        assert_eq!(parse_p_values("0.01\n\n# c\n0.5 # x\n").unwrap(), [0.01, 0.5]);
        assert!(parse_p_values("abc").is_err());
    }

    proptest! {
        #[test]
        fn bh_between_bonferroni_and_unadjusted(
            ps in proptest::collection::vec(0.0f64..=1.0, 1..30),
            alpha in 0.001f64..0.5,
        ) {
            let m = ps.len() as f64;
            let r = bh_adjust(&ps, alpha).unwrap();
            for (i, &p) in ps.iter().enumerate() {
                if p <= alpha / m { prop_assert!(r.rejected[i]); }
                if r.rejected[i] { prop_assert!(p <= alpha); }
                prop_assert!(r.adjusted[i] >= p && r.adjusted[i] <= 1.0);
            }
            let mut idx: Vec<usize> = (0..ps.len()).collect();
            idx.sort_by(|&a, &b| ps[a].total_cmp(&ps[b]));
            for w in idx.windows(2) {
                prop_assert!(r.adjusted[w[0]] <= r.adjusted[w[1]]);
            }
        }
    }
}
