//! A machine subject for listening experiments. It walks a session through
//! the participant API exactly as the web UI does, transcribes each
//! recording with an [`EngineAdapter`], parses the transcript into a plate
//! and submits it.

pub mod client;
pub mod engine;
pub mod run;

pub use client::{experiment_id_from_link, ApiClient, ApiError};
pub use engine::{
    clean_transcript_table, engine_from_spec, EngineAdapter, EngineError, ExternalEngine, HttpEngine, MockEngine,
    TranscriptionRequest, DEFAULT_ENGINE_TIMEOUT,
};
pub use run::{run_session, RobotRecording, RobotRunReport, RunError, RunOptions};
