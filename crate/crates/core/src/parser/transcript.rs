use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::lexicon::{NatoLexicon, DEFAULT_LEAD_SENTENCE};
use crate::parser::matcher::{match_token, MatchMetric, TokenMatch};
use crate::parser::tokenize::tokenize;
use crate::scoring::levenshtein;

const ENGLISH_STOPWORDS: &str = include_str!("../../data/english_stopwords.txt");

/// Tokens closer than this to any lead word are removed.
pub const NEAR_LEAD_DISTANCE: usize = 3;

/// Stop words that recognizers emit in place of spoken digits.
pub const DIGIT_HOMOPHONES: [&str; 4] = ["won", "to", "too", "for"];

/// Stop-word filter over the English list, optionally sparing some entries.
#[derive(Debug, Clone)]
pub struct StopWords {
    words: HashSet<String>,
    spared: HashSet<String>,
}

impl StopWords {
    /// The 179-word English list, applied strictly.
    pub fn english() -> Self {
        Self::from_words(ENGLISH_STOPWORDS.lines().map(str::trim).filter(|l| !l.is_empty()))
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        StopWords {
            words: words.into_iter().map(Into::into).collect(),
            spared: HashSet::new(),
        }
    }

    pub fn none() -> Self {
        Self::from_words(std::iter::empty::<String>())
    }

    /// Lets `words` through even though they are on the list.
    pub fn sparing<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.spared.extend(words.into_iter().map(Into::into));
        self
    }

    /// The English list with [`DIGIT_HOMOPHONES`] spared.
    pub fn english_sparing_homophones() -> Self {
        Self::english().sparing(DIGIT_HOMOPHONES)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn is_stop_word(&self, token: &str) -> bool {
        self.words.contains(token) && !self.spared.contains(token)
    }

    pub fn spared(&self) -> impl Iterator<Item = &str> {
        self.spared.iter().map(String::as_str)
    }
}

/// Why a token was removed before matching.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum Removal {
    NearLead { lead_word: String, distance: usize },
    StopWord,
}

pub fn removal_reason(token: &str, lead_words: &[String], stopwords: &StopWords) -> Option<Removal> {
    for lead in lead_words {
        let distance = levenshtein(token, lead);
        if distance < NEAR_LEAD_DISTANCE {
            return Some(Removal::NearLead {
                lead_word: lead.clone(),
                distance,
            });
        }
    }
    stopwords.is_stop_word(token).then_some(Removal::StopWord)
}

/// Drops tokens within edit distance 2 of any lead word, and stop words.
/// Order of the remaining tokens is preserved.
pub fn strip_lead_and_stopwords(tokens: &[String], lead_words: &[String], stopwords: &StopWords) -> Vec<String> {
    tokens
        .iter()
        .filter(|t| removal_reason(t, lead_words, stopwords).is_none())
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedTranscript {
    pub plate: String,
    pub matches: Vec<TokenMatch>,
}

/// Text-to-plate parser: tokenize, filter, match each token, concatenate symbols.
#[derive(Debug, Clone)]
pub struct TranscriptParser {
    lexicon: NatoLexicon,
    lead_words: Vec<String>,
    stopwords: StopWords,
    metric: MatchMetric,
    expand_numerals: bool,
}

impl TranscriptParser {
    /// Standard lexicon, default lead sentence, English stop words sparing
    /// digit homophones, numerals expanded digit by digit.
    pub fn new(metric: MatchMetric) -> Self {
        TranscriptParser {
            lead_words: tokenize(DEFAULT_LEAD_SENTENCE),
            lexicon: NatoLexicon::standard(),
            stopwords: StopWords::english_sparing_homophones(),
            metric,
            expand_numerals: true,
        }
    }

    pub fn with_lead(mut self, lead: &str) -> Self {
        self.lead_words = tokenize(lead);
        self
    }

    pub fn with_lexicon(mut self, lexicon: NatoLexicon) -> Self {
        self.lexicon = lexicon;
        self
    }

    pub fn with_stopwords(mut self, stopwords: StopWords) -> Self {
        self.stopwords = stopwords;
        self
    }

    /// When off, a numeral token like `12` goes through the word matcher
    /// like any other token.
    pub fn with_numeral_expansion(mut self, on: bool) -> Self {
        self.expand_numerals = on;
        self
    }

    pub fn lexicon(&self) -> &NatoLexicon {
        &self.lexicon
    }

    pub fn lead_words(&self) -> &[String] {
        &self.lead_words
    }

    pub fn stopwords(&self) -> &StopWords {
        &self.stopwords
    }

    pub fn metric(&self) -> MatchMetric {
        self.metric
    }

    pub fn parse(&self, text: &str) -> ParsedTranscript {
        let tokens = strip_lead_and_stopwords(&tokenize(text), &self.lead_words, &self.stopwords);
        let mut matches = Vec::with_capacity(tokens.len());
        for token in tokens {
            if self.expand_numerals && token.chars().all(|c| c.is_ascii_digit()) {
                matches.extend(token.chars().filter_map(|d| self.numeral_match(d)));
                continue;
            }
            matches.push(match_token(&token, &self.lexicon, self.metric).expect("tokens are never empty"));
        }
        ParsedTranscript {
            plate: matches.iter().map(|m| m.matched_symbol).collect(),
            matches,
        }
    }

    fn numeral_match(&self, digit: char) -> Option<TokenMatch> {
        let word = self.lexicon.word_for(digit)?;
        Some(TokenMatch {
            token: digit.to_string(),
            matched_word: word.to_string(),
            matched_symbol: digit,
            score: 1.0,
            best_lev_score: 1.0,
            metric: self.metric,
        })
    }
}

/// One-shot parse with the standard stop-word handling.
pub fn parse_transcript(text: &str, lexicon: &NatoLexicon, lead: &str, metric: MatchMetric) -> ParsedTranscript {
    TranscriptParser::new(metric)
        .with_lexicon(lexicon.clone())
        .with_lead(lead)
        .parse(text)
}
