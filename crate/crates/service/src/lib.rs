//! Builds impaired-recording experiments and serves them to participants
//! over a JSON API with server-side play-once enforcement.

pub mod api;
pub mod build;
pub mod config;
pub mod error;
pub mod store;

pub use api::{router, serve, AppState, ServiceConfig, ADMIN_TOKEN_HEADER, RECORDING_ID_HEADER};
pub use build::{build_experiment, BuildError};
pub use config::{Condition, ConfigError, ExperimentConfig};
pub use error::ServiceError;
pub use store::{SessionView, Store};
