//! Impairment parameters, subject types and submitted answers.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Codec id of the built-in pass-through PCM codec.
pub const PASSTHROUGH_CODEC: &str = "passthrough";

/// Good-to-bad transition probability held constant across the burst-size sweep.
pub const REPLICA_P_GB: f64 = 0.01;

/// Burst sizes swept in the replica experiment.
pub const REPLICA_BURST_SIZES: [u32; 6] = [1, 2, 4, 6, 8, 10];

/// Recording count of the replica experiment.
pub const REPLICA_RECORDING_COUNT: usize = 60;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ImpairmentError {
    #[error("{name} = {value} is not a probability in [0, 1]")]
    Probability { name: &'static str, value: f64 },
    #[error("burst_k must be at least 1")]
    ZeroBurst,
    #[error("codec id must not be empty")]
    EmptyCodec,
}

/// Channel conditions applied to one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpairmentSpec {
    pub codec: String,
    pub p_gb: f64,
    pub p_bg: f64,
    pub burst_k: u32,
    pub frame_drop_p: f64,
    pub seed: u64,
}

impl ImpairmentSpec {
    /// Burst channel with `p_bg = 1 - p_gb`, no frame drops.
    pub fn with_burst(codec: impl Into<String>, p_gb: f64, burst_k: u32, seed: u64) -> Self {
        ImpairmentSpec {
            codec: codec.into(),
            p_gb,
            p_bg: 1.0 - p_gb,
            burst_k,
            frame_drop_p: 0.0,
            seed,
        }
    }

    /// `p_gb = 0.01`, `p_bg = 0.99`, caller-chosen burst size.
    pub fn replica(codec: impl Into<String>, burst_k: u32, seed: u64) -> Self {
        Self::with_burst(codec, REPLICA_P_GB, burst_k, seed)
    }

    /// A channel that never corrupts or drops anything.
    pub fn clean(codec: impl Into<String>, seed: u64) -> Self {
        Self::with_burst(codec, 0.0, 1, seed)
    }

    pub fn with_frame_drop(mut self, p: f64) -> Self {
        self.frame_drop_p = p;
        self
    }

    pub fn validate(&self) -> Result<(), ImpairmentError> {
        for (name, value) in [
            ("p_gb", self.p_gb),
            ("p_bg", self.p_bg),
            ("frame_drop_p", self.frame_drop_p),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ImpairmentError::Probability { name, value });
            }
        }
        if self.burst_k == 0 {
            return Err(ImpairmentError::ZeroBurst);
        }
        if self.codec.trim().is_empty() {
            return Err(ImpairmentError::EmptyCodec);
        }
        Ok(())
    }

    pub fn is_replica_burst(&self) -> bool {
        REPLICA_BURST_SIZES.contains(&self.burst_k)
    }
}

/// Who produced an answer: a person, or the ASR robot with its engine label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum SubjectType {
    #[default]
    Human,
    Robot(String),
}

impl SubjectType {
    pub fn robot(label: impl Into<String>) -> Self {
        SubjectType::Robot(label.into())
    }
}

impl fmt::Display for SubjectType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubjectType::Human => f.write_str("human"),
            SubjectType::Robot(label) => write!(f, "robot:{label}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("subject type must be `human` or `robot:<label>`, got {0:?}")]
pub struct SubjectTypeError(String);

impl FromStr for SubjectType {
    type Err = SubjectTypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "human" => Ok(SubjectType::Human),
            Some(("robot", label)) if !label.is_empty() => Ok(SubjectType::Robot(label.into())),
            _ => Err(SubjectTypeError(s.to_string())),
        }
    }
}

impl Serialize for SubjectType {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SubjectType {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Uppercases and keeps only ASCII letters and digits.
pub fn normalize_answer(text: &str) -> String {
    text.chars()
        .filter(char::is_ascii_alphanumeric)
        .map(|c| c.to_ascii_uppercase())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub recording_id: String,
    pub submitted_text: String,
    pub normalized_plate: String,
    pub submitted_at: DateTime<Utc>,
    pub subject_type: SubjectType,
}

impl AnswerRecord {
    pub fn new(
        recording_id: impl Into<String>,
        submitted_text: impl Into<String>,
        subject_type: SubjectType,
        submitted_at: DateTime<Utc>,
    ) -> Self {
        let submitted_text = submitted_text.into();
        AnswerRecord {
            recording_id: recording_id.into(),
            normalized_plate: normalize_answer(&submitted_text),
            submitted_text,
            submitted_at,
            subject_type,
        }
    }
}
