use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use mcv_core::model::{ImpairmentSpec, REPLICA_BURST_SIZES, REPLICA_P_GB, REPLICA_RECORDING_COUNT};
use mcv_core::{DEFAULT_LEAD_SENTENCE, PASSTHROUGH_CODEC};

/// Parameters of one experiment build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_recordings: usize,
    pub codecs: Vec<String>,
    pub burst_sizes: Vec<u32>,
    pub p_gb: f64,
    /// Defaults to `1 - p_gb`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_bg: Option<f64>,
    #[serde(default)]
    pub frame_drop_p: f64,
    /// When non-empty, frame-drop probability becomes a third condition
    /// axis and `frame_drop_p` is ignored.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frame_drop_levels: Vec<f64>,
    #[serde(default = "default_lead")]
    pub lead_sentence: String,
    pub seed: u64,
    /// Clean recordings named `<PLATE>.wav`. Without it, a tone-sequence
    /// stub stands in for each spoken plate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_audio_dir: Option<PathBuf>,
    /// Experiment id; generated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

fn default_lead() -> String {
    DEFAULT_LEAD_SENTENCE.to_string()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("n_recordings must be at least 1")]
    NoRecordings,
    #[error("{0} must not be empty")]
    EmptyList(&'static str),
    #[error("{name} = {value} is not a probability")]
    Probability { name: &'static str, value: f64 },
    #[error("burst size must be positive")]
    ZeroBurst,
    #[error("experiment id {0:?} must be non-empty ASCII letters, digits, '-' or '_'")]
    BadId(String),
}

/// One cell of the condition cross product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub codec: String,
    pub burst_k: u32,
    pub frame_drop_p: f64,
}

impl ExperimentConfig {
    /// 60 recordings, pass-through codec, the six replica burst sizes.
    pub fn replica(seed: u64) -> Self {
        ExperimentConfig {
            n_recordings: REPLICA_RECORDING_COUNT,
            codecs: vec![PASSTHROUGH_CODEC.to_string()],
            burst_sizes: REPLICA_BURST_SIZES.to_vec(),
            p_gb: REPLICA_P_GB,
            p_bg: None,
            frame_drop_p: 0.0,
            frame_drop_levels: Vec::new(),
            lead_sentence: default_lead(),
            seed,
            source_audio_dir: None,
            id: None,
        }
    }

    pub fn p_bg(&self) -> f64 {
        self.p_bg.unwrap_or(1.0 - self.p_gb)
    }

    pub fn drop_levels(&self) -> Vec<f64> {
        if self.frame_drop_levels.is_empty() {
            vec![self.frame_drop_p]
        } else {
            self.frame_drop_levels.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_recordings == 0 {
            return Err(ConfigError::NoRecordings);
        }
        if self.codecs.is_empty() {
            return Err(ConfigError::EmptyList("codecs"));
        }
        if self.burst_sizes.is_empty() {
            return Err(ConfigError::EmptyList("burst_sizes"));
        }
        if self.burst_sizes.contains(&0) {
            return Err(ConfigError::ZeroBurst);
        }
        let mut probs = vec![("p_gb", self.p_gb), ("p_bg", self.p_bg()), ("frame_drop_p", self.frame_drop_p)];
        probs.extend(self.frame_drop_levels.iter().map(|&p| ("frame_drop_levels", p)));
        for (name, value) in probs {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::Probability { name, value });
            }
        }
        if let Some(id) = &self.id {
            if !is_safe_id(id) {
                return Err(ConfigError::BadId(id.clone()));
            }
        }
        Ok(())
    }

    /// Cross product in codec, burst size, drop level order.
    pub fn conditions(&self) -> Vec<Condition> {
        let drops = self.drop_levels();
        let mut out = Vec::new();
        for codec in &self.codecs {
            for &burst_k in &self.burst_sizes {
                for &frame_drop_p in &drops {
                    out.push(Condition {
                        codec: codec.clone(),
                        burst_k,
                        frame_drop_p,
                    });
                }
            }
        }
        out
    }

    pub fn impairment(&self, cond: &Condition, seed: u64) -> ImpairmentSpec {
        ImpairmentSpec {
            codec: cond.codec.clone(),
            p_gb: self.p_gb,
            p_bg: self.p_bg(),
            burst_k: cond.burst_k,
            frame_drop_p: cond.frame_drop_p,
            seed,
        }
    }
}

/// Ids become directory names.
pub(crate) fn is_safe_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}
