//! Exhaustive single-edit enumeration over the lexicon.
//!
//! Every deletion, substitution and insertion (alphabet `a`-`z`) of every
//! lexicon word is scored against all lexicon words. A variant whose source
//! word is not the unique best-scoring word is a collision. Variants that
//! the pre-match filters would remove are listed separately.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::lexicon::NatoLexicon;
use crate::parser::matcher::{match_token, MatchMetric, SCORE_TIE_EPSILON};
use crate::parser::transcript::{removal_reason, Removal, StopWords};

pub const EDIT_ALPHABET: std::ops::RangeInclusive<char> = 'a'..='z';

/// All distinct strings one edit away from `word` (excluding `word`).
pub fn single_edits(word: &str) -> BTreeSet<String> {
    let chars: Vec<char> = word.chars().collect();
    let mut out = BTreeSet::new();
    for i in 0..chars.len() {
        let mut v = chars.clone();
        v.remove(i);
        out.insert(v.into_iter().collect());
        for c in EDIT_ALPHABET {
            if c != chars[i] {
                let mut v = chars.clone();
                v[i] = c;
                out.insert(v.into_iter().collect());
            }
        }
    }
    for i in 0..=chars.len() {
        for c in EDIT_ALPHABET {
            let mut v = chars.clone();
            v.insert(i, c);
            out.insert(v.into_iter().collect());
        }
    }
    out.remove(word);
    out.remove("");
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    pub source: String,
    pub variant: String,
    /// All words sharing the top score, in lexicon order.
    pub best_words: Vec<String>,
    pub best_score: f64,
    pub source_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredVariant {
    pub source: String,
    pub variant: String,
    pub removal: Removal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub metric: MatchMetric,
    pub total_variants: usize,
    pub recovered: usize,
    pub collisions: Vec<Collision>,
    /// Variants the matcher got wrong although the source was the unique best.
    /// Always empty for a correct matcher.
    pub mismatches: Vec<(String, String, String)>,
    pub filtered: Vec<FilteredVariant>,
}

pub fn one_edit_report(
    lexicon: &NatoLexicon,
    metric: MatchMetric,
    lead_words: &[String],
    stopwords: &StopWords,
) -> RobustnessReport {
    let mut report = RobustnessReport {
        metric,
        total_variants: 0,
        recovered: 0,
        collisions: Vec::new(),
        mismatches: Vec::new(),
        filtered: Vec::new(),
    };
    for entry in lexicon.entries() {
        for variant in single_edits(&entry.word) {
            report.total_variants += 1;
            if let Some(removal) = removal_reason(&variant, lead_words, stopwords) {
                report.filtered.push(FilteredVariant {
                    source: entry.word.clone(),
                    variant: variant.clone(),
                    removal,
                });
            }
            let scores: Vec<f64> = lexicon
                .entries()
                .iter()
                .map(|e| metric.score(&variant, &e.word))
                .collect();
            let best = scores.iter().copied().fold(f64::MIN, f64::max);
            let best_words: Vec<String> = lexicon
                .entries()
                .iter()
                .zip(&scores)
                .filter(|(_, &s)| best - s <= SCORE_TIE_EPSILON)
                .map(|(e, _)| e.word.clone())
                .collect();
            let source_score = metric.score(&variant, &entry.word);
            if best_words.len() == 1 && best_words[0] == entry.word {
                let got = match_token(&variant, lexicon, metric).expect("variants are non-empty");
                if got.matched_word == entry.word {
                    report.recovered += 1;
                } else {
                    report.mismatches.push((entry.word.clone(), variant, got.matched_word));
                }
            } else {
                report.collisions.push(Collision {
                    source: entry.word.clone(),
                    variant,
                    best_words,
                    best_score: best,
                    source_score,
                });
            }
        }
    }
    report
}

impl RobustnessReport {
    /// Stable text form: one tab-separated line per collision.
    pub fn collision_fixture(&self) -> String {
        let mut out = format!(
            "# single-edit collisions, metric={}, variants={}, recovered={}, collisions={}\n# source\tvariant\tbest_words\tbest_score\tsource_score\n",
            self.metric,
            self.total_variants,
            self.recovered,
            self.collisions.len()
        );
        for c in &self.collisions {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.6}\t{:.6}",
                c.source,
                c.variant,
                c.best_words.join(","),
                c.best_score,
                c.source_score
            );
        }
        out
    }

    /// Stable text form of variants removed before matching.
    pub fn filtered_fixture(&self) -> String {
        let mut out = String::from("# single-edit variants removed before matching\n# source\tvariant\treason\n");
        for f in &self.filtered {
            let reason = match &f.removal {
                Removal::NearLead { lead_word, distance } => format!("near-lead:{lead_word}:{distance}"),
                Removal::StopWord => "stop-word".to_string(),
            };
            let _ = writeln!(out, "{}\t{}\t{}", f.source, f.variant, reason);
        }
        out
    }
}
