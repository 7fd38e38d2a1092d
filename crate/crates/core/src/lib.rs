//! Building blocks for license-plate listening experiments over impaired
//! voice channels: plates and the NATO lexicon, the burst-error impairment
//! pipeline, the transcript parser, and the accuracy metrics.

pub mod analysis;
pub mod channel;
pub mod fsutil;
pub mod lexicon;
pub mod manifest;
pub mod model;
pub mod parser;
pub mod plate;
pub mod results;
pub mod scoring;
pub mod session;
pub mod wave;

pub use lexicon::{plate_to_nato, NatoLexicon, DEFAULT_LEAD_SENTENCE};
pub use manifest::{validate_manifest, ExperimentManifest, RecordingEntry, Violation};
pub use model::{normalize_answer, AnswerRecord, ImpairmentSpec, SubjectType, PASSTHROUGH_CODEC};
pub use parser::{parse_transcript, MatchMetric, TokenMatch, TranscriptParser};
pub use plate::{generate_plate, LicensePlate};
pub use scoring::{levenshtein, ScoreReport};
pub use session::Session;
