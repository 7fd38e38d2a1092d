//! Transcribed text to license plate.

pub mod bleu;
pub mod matcher;
pub mod robustness;
pub mod tokenize;
pub mod transcript;

pub use bleu::char_bleu;
pub use matcher::{match_token, MatchError, MatchMetric, TokenMatch, SCORE_TIE_EPSILON};
pub use tokenize::tokenize;
pub use transcript::{
    parse_transcript, removal_reason, strip_lead_and_stopwords, ParsedTranscript, Removal, StopWords,
    TranscriptParser,
};
