//! Speech-to-text engines behind one async interface.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Stdio;
use std::time::Duration;

use async_trait::async_trait;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use mcv_core::parser::robustness::EDIT_ALPHABET;
use mcv_core::{plate_to_nato, ExperimentManifest, NatoLexicon};

pub const DEFAULT_ENGINE_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone)]
pub struct TranscriptionRequest {
    pub position: usize,
    /// From the audio response header; absent when the server omits it.
    pub recording_id: Option<String>,
    pub audio: Vec<u8>,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("no transcript for recording {0:?}")]
    UnknownRecording(Option<String>),
    #[error("engine timed out after {0:?}")]
    Timeout(Duration),
    #[error("engine command failed: {0}")]
    Command(String),
    #[error("engine HTTP request failed: {0}")]
    Http(String),
    #[error("engine output is not valid: {0}")]
    Output(String),
    #[error("unknown engine spec {0:?} (expected mock:<table.json>, external:<cmd> or http:<url>)")]
    Spec(String),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Audio in, text out. Implementations must give up after their timeout.
#[async_trait]
pub trait EngineAdapter: Send + Sync {
    fn label(&self) -> String;
    async fn transcribe(&self, request: &TranscriptionRequest) -> Result<String, EngineError>;
}

/// Table-driven test double. With noise, exactly one lexicon word of each
/// transcript receives one random single-character edit.
#[derive(Debug, Clone)]
pub struct MockEngine {
    table: BTreeMap<String, String>,
    noise_seed: Option<u64>,
    lexicon: NatoLexicon,
}

impl MockEngine {
    pub fn new(table: BTreeMap<String, String>) -> Self {
        MockEngine {
            table,
            noise_seed: None,
            lexicon: NatoLexicon::standard(),
        }
    }

    pub fn with_noise(mut self, seed: u64) -> Self {
        self.noise_seed = Some(seed);
        self
    }

    pub fn from_table_file(path: &Path) -> Result<Self, EngineError> {
        let text = std::fs::read_to_string(path)?;
        let table = serde_json::from_str(&text).map_err(|e| EngineError::Output(format!("{}: {e}", path.display())))?;
        Ok(Self::new(table))
    }

    /// Applies the noise model to one transcript. Deterministic in the seed
    /// and recording id, independent of call order.
    pub fn corrupt(&self, recording_id: &str, text: &str, seed: u64) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(recording_id.as_bytes()));
        let mut words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        let candidates: Vec<usize> = (0..words.len())
            .filter(|&i| self.lexicon.contains_word(&words[i].to_lowercase()))
            .collect();
        if candidates.is_empty() {
            return text.to_string();
        }
        let target = candidates[rng.gen_range(0..candidates.len())];
        words[target] = single_edit(&words[target], &mut rng);
        words.join(" ")
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

fn random_letter(rng: &mut ChaCha8Rng) -> char {
    let letters: Vec<char> = EDIT_ALPHABET.collect();
    letters[rng.gen_range(0..letters.len())]
}

/// One deletion, substitution or insertion; never returns `word` itself.
fn single_edit(word: &str, rng: &mut ChaCha8Rng) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    let kind = if chars.len() > 1 { rng.gen_range(0..3) } else { rng.gen_range(1..3) };
    match kind {
        0 => {
            chars.remove(rng.gen_range(0..chars.len()));
        }
        1 => {
            let i = rng.gen_range(0..chars.len());
            let mut c = random_letter(rng);
            while c == chars[i] {
                c = random_letter(rng);
            }
            chars[i] = c;
        }
        _ => {
            let i = rng.gen_range(0..=chars.len());
            chars.insert(i, random_letter(rng));
        }
    }
    chars.into_iter().collect()
}

#[async_trait]
impl EngineAdapter for MockEngine {
    fn label(&self) -> String {
        "mock".to_string()
    }

    async fn transcribe(&self, request: &TranscriptionRequest) -> Result<String, EngineError> {
        let id = request.recording_id.as_deref();
        let text = id
            .and_then(|id| self.table.get(id))
            .ok_or_else(|| EngineError::UnknownRecording(request.recording_id.clone()))?;
        Ok(match (self.noise_seed, id) {
            (Some(seed), Some(id)) => self.corrupt(id, text, seed),
            _ => text.clone(),
        })
    }
}

/// Runs `<command...> <wav-path>` and reads the transcript from stdout.
#[derive(Debug, Clone)]
pub struct ExternalEngine {
    command: String,
    timeout: Duration,
}

impl ExternalEngine {
    pub fn new(command: impl Into<String>, timeout: Duration) -> Self {
        ExternalEngine {
            command: command.into(),
            timeout,
        }
    }
}

#[async_trait]
impl EngineAdapter for ExternalEngine {
    fn label(&self) -> String {
        format!("external:{}", self.command)
    }

    async fn transcribe(&self, request: &TranscriptionRequest) -> Result<String, EngineError> {
        let mut parts = self.command.split_whitespace();
        let program = parts.next().ok_or_else(|| EngineError::Spec(self.label()))?;
        let file = tempfile::Builder::new().suffix(".wav").tempfile()?;
        tokio::fs::write(file.path(), &request.audio).await?;
        let child = tokio::process::Command::new(program)
            .args(parts)
            .arg(file.path())
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .kill_on_drop(true)
            .spawn()
            .map_err(|e| EngineError::Command(format!("{program}: {e}")))?;
        let output = tokio::time::timeout(self.timeout, child.wait_with_output())
            .await
            .map_err(|_| EngineError::Timeout(self.timeout))??;
        if !output.status.success() {
            return Err(EngineError::Command(format!(
                "{} exited with {}: {}",
                self.command,
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        String::from_utf8(output.stdout)
            .map(|s| s.trim().to_string())
            .map_err(|e| EngineError::Output(e.to_string()))
    }
}

/// POSTs `audio/wav` and expects `{"text": ...}`.
#[derive(Debug, Clone)]
pub struct HttpEngine {
    url: String,
    client: reqwest::Client,
}

#[derive(Deserialize)]
struct HttpTranscript {
    text: String,
}

impl HttpEngine {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self, EngineError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EngineError::Http(e.to_string()))?;
        Ok(HttpEngine { url: url.into(), client })
    }
}

#[async_trait]
impl EngineAdapter for HttpEngine {
    fn label(&self) -> String {
        format!("http:{}", self.url)
    }

    async fn transcribe(&self, request: &TranscriptionRequest) -> Result<String, EngineError> {
        let response = self
            .client
            .post(&self.url)
            .header(reqwest::header::CONTENT_TYPE, "audio/wav")
            .body(request.audio.clone())
            .send()
            .await
            .map_err(|e| {
                if e.is_timeout() {
                    EngineError::Http(format!("timed out: {e}"))
                } else {
                    EngineError::Http(e.to_string())
                }
            })?;
        let status = response.status();
        if !status.is_success() {
            return Err(EngineError::Http(format!("{} answered {status}", self.url)));
        }
        let body: HttpTranscript = response.json().await.map_err(|e| EngineError::Output(e.to_string()))?;
        Ok(body.text)
    }
}

/// `mock:<table.json>`, `external:<cmd>` or `http:<url>`.
pub fn engine_from_spec(
    spec: &str,
    timeout: Duration,
    noise_seed: Option<u64>,
) -> Result<Box<dyn EngineAdapter>, EngineError> {
    match spec.split_once(':') {
        Some(("mock", path)) if !path.is_empty() => {
            let engine = MockEngine::from_table_file(&PathBuf::from(path))?;
            Ok(Box::new(match noise_seed {
                Some(seed) => engine.with_noise(seed),
                None => engine,
            }))
        }
        Some(("external", cmd)) if !cmd.trim().is_empty() => Ok(Box::new(ExternalEngine::new(cmd, timeout))),
        // Accept both `http:<url>` and a bare `http://...` URL.
        Some(("http", rest)) if rest.starts_with("//") => Ok(Box::new(HttpEngine::new(spec, timeout)?)),
        Some(("http", url)) if !url.is_empty() => Ok(Box::new(HttpEngine::new(url, timeout)?)),
        _ => Err(EngineError::Spec(spec.to_string())),
    }
}

/// Exact clean transcript of every recording, keyed by recording id.
/// Recordings without a ground truth are skipped.
pub fn clean_transcript_table(manifest: &ExperimentManifest) -> BTreeMap<String, String> {
    let lexicon = NatoLexicon::standard();
    manifest
        .recordings
        .iter()
        .filter_map(|r| {
            let plate = r.ground_truth.as_ref()?;
            let text = plate_to_nato(plate, &lexicon, &manifest.lead_sentence).ok()?;
            Some((r.id.clone(), text))
        })
        .collect()
}
