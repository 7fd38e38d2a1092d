//! Experiment manifests: the ordered recording set persisted as `manifest.json`.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{ImpairmentSpec, REPLICA_RECORDING_COUNT};
use crate::plate::LicensePlate;
use crate::wave::{wave_probe, WaveError};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingEntry {
    pub id: String,
    /// Relative to the directory holding the manifest.
    pub audio_path: PathBuf,
    pub impairment: ImpairmentSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<LicensePlate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub id: String,
    pub lead_sentence: String,
    pub recordings: Vec<RecordingEntry>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

/// One broken invariant found by [`validate_manifest`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyId,
    NoRecordings,
    DuplicateRecordingId(String),
    EmptyRecordingId { index: usize },
    AbsoluteAudioPath { id: String, path: PathBuf },
    MissingAudio { id: String, path: PathBuf },
    BadAudio { id: String, path: PathBuf, reason: String },
    BadImpairment { id: String, reason: String },
    RecordingCount { expected: usize, actual: usize },
    NonReplicaBurst { id: String, burst_k: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyId => write!(f, "manifest id is empty"),
            Violation::NoRecordings => write!(f, "manifest has no recordings"),
            Violation::DuplicateRecordingId(id) => write!(f, "duplicate recording id {id:?}"),
            Violation::EmptyRecordingId { index } => write!(f, "recording #{index} has an empty id"),
            Violation::AbsoluteAudioPath { id, path } => {
                write!(f, "recording {id:?}: audio path {} is not relative", path.display())
            }
            Violation::MissingAudio { id, path } => {
                write!(f, "recording {id:?}: audio file {} does not exist", path.display())
            }
            Violation::BadAudio { id, path, reason } => {
                write!(f, "recording {id:?}: {}: {reason}", path.display())
            }
            Violation::BadImpairment { id, reason } => write!(f, "recording {id:?}: {reason}"),
            Violation::RecordingCount { expected, actual } => {
                write!(f, "expected {expected} recordings, found {actual}")
            }
            Violation::NonReplicaBurst { id, burst_k } => {
                write!(f, "recording {id:?}: burst size {burst_k} is outside the replica sweep")
            }
        }
    }
}

/// Checks every manifest invariant; audio paths resolve against `base_dir`.
/// An empty result means the manifest is usable.
pub fn validate_manifest(manifest: &ExperimentManifest, base_dir: &Path) -> Vec<Violation> {
    let mut out = Vec::new();
    if manifest.id.trim().is_empty() {
        out.push(Violation::EmptyId);
    }
    if manifest.recordings.is_empty() {
        out.push(Violation::NoRecordings);
    }
    let mut seen = HashSet::new();
    for (index, rec) in manifest.recordings.iter().enumerate() {
        if rec.id.is_empty() {
            out.push(Violation::EmptyRecordingId { index });
        } else if !seen.insert(rec.id.as_str()) {
            out.push(Violation::DuplicateRecordingId(rec.id.clone()));
        }
        if let Err(e) = rec.impairment.validate() {
            out.push(Violation::BadImpairment {
                id: rec.id.clone(),
                reason: e.to_string(),
            });
        }
        if rec.audio_path.is_absolute() {
            out.push(Violation::AbsoluteAudioPath {
                id: rec.id.clone(),
                path: rec.audio_path.clone(),
            });
            continue;
        }
        let full = base_dir.join(&rec.audio_path);
        match wave_probe(&full) {
            Ok(_) => {}
            Err(WaveError::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => {
                out.push(Violation::MissingAudio {
                    id: rec.id.clone(),
                    path: rec.audio_path.clone(),
                })
            }
            Err(e) => out.push(Violation::BadAudio {
                id: rec.id.clone(),
                path: rec.audio_path.clone(),
                reason: e.to_string(),
            }),
        }
    }
    out
}

/// [`validate_manifest`] plus the replica-experiment shape: 60 recordings and
/// burst sizes from the fixed sweep.
pub fn validate_replica_manifest(manifest: &ExperimentManifest, base_dir: &Path) -> Vec<Violation> {
    let mut out = validate_manifest(manifest, base_dir);
    if manifest.recordings.len() != REPLICA_RECORDING_COUNT {
        out.push(Violation::RecordingCount {
            expected: REPLICA_RECORDING_COUNT,
            actual: manifest.recordings.len(),
        });
    }
    for rec in &manifest.recordings {
        if !rec.impairment.is_replica_burst() {
            out.push(Violation::NonReplicaBurst {
                id: rec.id.clone(),
                burst_k: rec.impairment.burst_k,
            });
        }
    }
    out
}

impl ExperimentManifest {
    pub fn recording(&self, id: &str) -> Option<&RecordingEntry> {
        self.recordings.iter().find(|r| r.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|source| ManifestError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Loads `<dir>/manifest.json`.
    pub fn load_dir(dir: &Path) -> Result<Self, ManifestError> {
        Self::load(&dir.join(MANIFEST_FILE))
    }

    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        crate::fsutil::write_atomic(path, self.to_json().as_bytes()).map_err(|source| {
            ManifestError::Io {
                path: path.to_path_buf(),
                source,
            }
        })
    }
}
