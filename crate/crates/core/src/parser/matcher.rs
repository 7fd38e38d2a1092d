use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::lexicon::NatoLexicon;
use crate::parser::bleu::{char_bleu, DEFAULT_MAX_N};
use crate::scoring::lev_score;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMetric {
    #[default]
    Levscore,
    Bleu,
}

impl MatchMetric {
    pub fn score(self, token: &str, word: &str) -> f64 {
        match self {
            MatchMetric::Levscore => lev_score(word, token),
            MatchMetric::Bleu => char_bleu(token, word, DEFAULT_MAX_N),
        }
    }
}

impl fmt::Display for MatchMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMetric::Levscore => "levscore",
            MatchMetric::Bleu => "bleu",
        })
    }
}

impl FromStr for MatchMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "levscore" | "lev" | "levenshtein" => Ok(MatchMetric::Levscore),
            "bleu" => Ok(MatchMetric::Bleu),
            other => Err(format!("unknown metric {other:?} (expected levscore or bleu)")),
        }
    }
}

/// Scores closer than this are ties. Equal BLEU values computed from
/// different n-gram counts can differ in the last bit.
pub const SCORE_TIE_EPSILON: f64 = 1e-12;

/// The lexicon word chosen for one transcribed token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenMatch {
    pub token: String,
    pub matched_word: String,
    pub matched_symbol: char,
    /// Score of `matched_word` under `metric`.
    pub score: f64,
    /// Best LevScore of the token over the whole lexicon.
    pub best_lev_score: f64,
    pub metric: MatchMetric,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MatchError {
    #[error("cannot match an empty token")]
    EmptyToken,
}

/// Picks the lexicon word with the highest score. Ties go to the earlier
/// word in lexicon order (letters A-Z, then digits 0-9).
pub fn match_token(token: &str, lexicon: &NatoLexicon, metric: MatchMetric) -> Result<TokenMatch, MatchError> {
    if token.is_empty() {
        return Err(MatchError::EmptyToken);
    }
    let mut best: Option<(f64, usize)> = None;
    let mut best_lev = 0.0f64;
    for (idx, entry) in lexicon.entries().iter().enumerate() {
        let score = metric.score(token, &entry.word);
        if best.is_none_or(|(top, _)| score > top + SCORE_TIE_EPSILON) {
            best = Some((score, idx));
        }
        best_lev = best_lev.max(lev_score(&entry.word, token));
    }
    let (score, idx) = best.expect("lexicon is never empty");
    let entry = &lexicon.entries()[idx];
    Ok(TokenMatch {
        token: token.to_string(),
        matched_word: entry.word.clone(),
        matched_symbol: entry.symbol,
        score,
        best_lev_score: best_lev,
        metric,
    })
}
