//! Experiment construction: plates, balanced condition assignment, and
//! impaired audio, written to a staging directory that is renamed into
//! place only when every recording succeeded.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mcv_core::channel::{codec_from_id, impair_recording, CodecAdapter, CodecError, PipelineError};
use mcv_core::manifest::{ManifestError, MANIFEST_FILE};
use mcv_core::plate::random_plate;
use mcv_core::wave::{tone, wave_read, wave_write, Wave, WaveError};
use mcv_core::{ExperimentManifest, LicensePlate, NatoLexicon, RecordingEntry};

use crate::config::{ConfigError, ExperimentConfig};

pub const AUDIO_DIR: &str = "audio";
pub const STUB_SAMPLE_RATE: u32 = 8_000;

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("experiment directory {0} already exists")]
    Exists(PathBuf),
    #[error("source audio directory holds {found} usable plate recordings, {needed} needed")]
    NotEnoughSourceAudio { needed: usize, found: usize },
    #[error("source audio {path}: {source}")]
    SourceAudio { path: PathBuf, source: WaveError },
    #[error("codec {codec:?}: {source}")]
    Codec { codec: String, source: CodecError },
    #[error("recording {recording_id}: {source}")]
    Impairment { recording_id: String, source: PipelineError },
    #[error("writing {path}: {source}")]
    Write { path: PathBuf, source: WaveError },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("I/O on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BuildError + '_ {
    move |source| BuildError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Builds the experiment into `dir`, which must not exist yet. On failure
/// nothing is left behind.
pub fn build_experiment(
    config: &ExperimentConfig,
    id: &str,
    created_at: DateTime<Utc>,
    dir: &Path,
) -> Result<ExperimentManifest, BuildError> {
    config.validate()?;
    if dir.exists() {
        return Err(BuildError::Exists(dir.to_path_buf()));
    }
    let parent = dir.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(io_err(parent))?;
    let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or("experiment");
    let staging = parent.join(format!(".build-{name}-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
    }
    let result = build_into(config, id, created_at, &staging)
        .and_then(|m| fs::rename(&staging, dir).map_err(io_err(dir)).map(|_| m));
    if result.is_err() {
        let _ = fs::remove_dir_all(&staging);
    }
    result
}

fn build_into(
    config: &ExperimentConfig,
    id: &str,
    created_at: DateTime<Utc>,
    dir: &Path,
) -> Result<ExperimentManifest, BuildError> {
    let audio_dir = dir.join(AUDIO_DIR);
    fs::create_dir_all(&audio_dir).map_err(io_err(&audio_dir))?;
    let lexicon = NatoLexicon::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let n = config.n_recordings;
    let sources = match &config.source_audio_dir {
        Some(src) => Some(source_pool(src)?),
        None => None,
    };
    let plates = match &sources {
        Some(pool) => {
            let mut available: Vec<&LicensePlate> = pool.keys().collect();
            if available.len() < n {
                return Err(BuildError::NotEnoughSourceAudio {
                    needed: n,
                    found: available.len(),
                });
            }
            available.shuffle(&mut rng);
            available.into_iter().take(n).cloned().collect()
        }
        None => unique_plates(n, &mut rng),
    };

    // Balanced: every cell gets floor(n / cells) recordings and a random
    // subset of cells gets one more.
    let mut cells = config.conditions();
    cells.shuffle(&mut rng);
    let mut assignment: Vec<usize> = (0..n).map(|i| i % cells.len()).collect();
    assignment.shuffle(&mut rng);

    let mut codecs: BTreeMap<String, Box<dyn CodecAdapter>> = BTreeMap::new();
    let width = (n.saturating_sub(1)).to_string().len().max(2);
    let mut recordings = Vec::with_capacity(n);
    for (i, (plate, &cell)) in plates.into_iter().zip(&assignment).enumerate() {
        let cond = &cells[cell];
        let recording_id = format!("rec-{i:0width$}");
        let spec = config.impairment(cond, rng.gen());
        if !codecs.contains_key(&cond.codec) {
            let codec = codec_from_id(&cond.codec).map_err(|source| BuildError::Codec {
                codec: cond.codec.clone(),
                source,
            })?;
            codecs.insert(cond.codec.clone(), codec);
        }
        let clean = match &sources {
            Some(pool) => {
                let path = &pool[&plate];
                wave_read(path).map_err(|source| BuildError::SourceAudio {
                    path: path.clone(),
                    source,
                })?
            }
            None => stub_recording(&plate, &lexicon),
        };
        let impaired = impair_recording(&clean, &spec, codecs[&cond.codec].as_ref()).map_err(|source| {
            BuildError::Impairment {
                recording_id: recording_id.clone(),
                source,
            }
        })?;
        let rel = PathBuf::from(AUDIO_DIR).join(format!("{recording_id}.wav"));
        let out = dir.join(&rel);
        wave_write(&out, &impaired.samples, impaired.sample_rate)
            .map_err(|source| BuildError::Write { path: out.clone(), source })?;
        recordings.push(RecordingEntry {
            id: recording_id,
            audio_path: rel,
            impairment: spec,
            ground_truth: Some(plate),
        });
    }

    let manifest = ExperimentManifest {
        id: id.to_string(),
        lead_sentence: config.lead_sentence.clone(),
        recordings,
        created_at,
    };
    manifest.save(&dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn unique_plates(n: usize, rng: &mut ChaCha8Rng) -> Vec<LicensePlate> {
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let plate = random_plate(rng);
        if seen.insert(plate.clone()) {
            out.push(plate);
        }
    }
    out
}

/// `<PLATE>.wav` files in `dir`, keyed by plate. Other files are ignored.
fn source_pool(dir: &Path) -> Result<BTreeMap<LicensePlate, PathBuf>, BuildError> {
    let mut pool = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("wav") {
            continue;
        }
        let plate = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| LicensePlate::parse(s).ok());
        if let Some(plate) = plate {
            pool.insert(plate, path);
        }
    }
    Ok(pool)
}

/// Stand-in for a spoken plate: one 200 ms tone per plate character with a
/// pitch chosen by the character's lexicon position, 50 ms gaps.
pub fn stub_recording(plate: &LicensePlate, lexicon: &NatoLexicon) -> Wave {
    let rate = STUB_SAMPLE_RATE;
    let tone_len = rate as usize / 5;
    let gap = vec![0i16; rate as usize / 20];
    let mut samples = gap.clone();
    for ch in plate.as_str().chars() {
        let idx = lexicon.entries().iter().position(|e| e.symbol == ch).unwrap_or(0);
        samples.extend(tone(300.0 + 40.0 * idx as f64, rate, tone_len, 8_000));
        samples.extend_from_slice(&gap);
    }
    Wave::new(samples, rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mcv_core::validate_manifest;
    use std::collections::HashMap;

    fn at() -> DateTime<Utc> {
        "2024-01-01T00:00:00Z".parse().unwrap()
    }

    #[test]
    fn replica_build_is_balanced_and_valid() {
        let tmp = tempfile::tempdir().unwrap();
        let mut config = ExperimentConfig::replica(42);
        // Extra arguments become positional parameters of the shell and are ignored.
        config.codecs.push("external@320:sh -c cat".into());
        let dir = tmp.path().join("exp");
        let m = build_experiment(&config, "exp", at(), &dir).unwrap();
        assert_eq!(m.recordings.len(), 60);
        assert!(validate_manifest(&m, &dir).is_empty());
        let mut cells: HashMap<(String, u32), usize> = HashMap::new();
        for r in &m.recordings {
            *cells.entry((r.impairment.codec.clone(), r.impairment.burst_k)).or_default() += 1;
        }
        assert_eq!(cells.len(), 12);
        assert!(cells.values().all(|&c| c == 5), "{cells:?}");
        let plates: HashSet<_> = m.recordings.iter().map(|r| r.ground_truth.clone()).collect();
        assert_eq!(plates.len(), 60);
    }

    #[test]
    fn uneven_counts_stay_within_one() {
        let tmp = tempfile::tempdir().unwrap();
        let mut config = ExperimentConfig::replica(3);
        config.n_recordings = 17;
        let m = build_experiment(&config, "e", at(), &tmp.path().join("e")).unwrap();
        let mut counts: HashMap<u32, usize> = HashMap::new();
        for r in &m.recordings {
            *counts.entry(r.impairment.burst_k).or_default() += 1;
        }
        let (lo, hi) = (counts.values().min().unwrap(), counts.values().max().unwrap());
        assert_eq!(counts.len(), 6);
        assert!(hi - lo <= 1);
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let tmp = tempfile::tempdir().unwrap();
        let config = ExperimentConfig::replica(7);
        for name in ["a", "b"] {
            build_experiment(&config, "same", at(), &tmp.path().join(name)).unwrap();
        }
        for rel in ["manifest.json", "audio/rec-00.wav", "audio/rec-59.wav"] {
            assert_eq!(
                fs::read(tmp.path().join("a").join(rel)).unwrap(),
                fs::read(tmp.path().join("b").join(rel)).unwrap(),
                "{rel}"
            );
        }
    }

    #[test]
    fn single_recording() {
        let tmp = tempfile::tempdir().unwrap();
        let mut config = ExperimentConfig::replica(1);
        config.n_recordings = 1;
        let dir = tmp.path().join("one");
        let m = build_experiment(&config, "one", at(), &dir).unwrap();
        assert_eq!(m.recordings.len(), 1);
        assert!(validate_manifest(&m, &dir).is_empty());
    }

    #[test]
    fn failing_codec_leaves_nothing_behind() {
        let tmp = tempfile::tempdir().unwrap();
        let mut config = ExperimentConfig::replica(1);
        config.codecs = vec!["external:/nonexistent/codec-binary".into()];
        let dir = tmp.path().join("broken");
        let err = build_experiment(&config, "broken", at(), &dir).unwrap_err();
        assert!(matches!(err, BuildError::Impairment { .. }), "{err}");
        assert!(!dir.exists());
        assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
    }

    #[test]
    fn existing_directory_is_refused() {
        let tmp = tempfile::tempdir().unwrap();
        let err = build_experiment(&ExperimentConfig::replica(1), "x", at(), tmp.path()).unwrap_err();
        assert!(matches!(err, BuildError::Exists(_)));
    }

    #[test]
    fn source_audio_is_used_when_configured() {
        let tmp = tempfile::tempdir().unwrap();
        let src = tmp.path().join("src");
        fs::create_dir(&src).unwrap();
        let lex = NatoLexicon::standard();
        for p in ["A12BCD", "B34CDE", "C56DEF"] {
            let w = stub_recording(&LicensePlate::parse(p).unwrap(), &lex);
            wave_write(src.join(format!("{p}.wav")), &w.samples, w.sample_rate).unwrap();
        }
        fs::write(src.join("notes.txt"), "ignored").unwrap();
        let mut config = ExperimentConfig::replica(5);
        config.source_audio_dir = Some(src.clone());
        config.n_recordings = 3;
        config.p_gb = 0.0;
        let dir = tmp.path().join("exp");
        let m = build_experiment(&config, "exp", at(), &dir).unwrap();
        for r in &m.recordings {
            let plate = r.ground_truth.as_ref().unwrap();
            // p_gb = 0 with no drops: output equals the source.
            assert_eq!(
                wave_read(dir.join(&r.audio_path)).unwrap(),
                wave_read(src.join(format!("{plate}.wav"))).unwrap()
            );
        }
        config.n_recordings = 4;
        let err = build_experiment(&config, "more", at(), &tmp.path().join("more")).unwrap_err();
        assert!(matches!(err, BuildError::NotEnoughSourceAudio { needed: 4, found: 3 }));
    }
}
