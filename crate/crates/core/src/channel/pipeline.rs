//! encode -> burst corruption -> frame drops -> decode.

use std::fmt;
use std::path::Path;

use crate::channel::codec::{CodecAdapter, CodecError};
use crate::channel::frames::drop_flags;
use crate::channel::gilbert_elliot::ge_corrupt;
use crate::model::{ImpairmentError, ImpairmentSpec};
use crate::wave::{wave_read, wave_write, Wave, WaveError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Validate,
    ReadInput,
    Encode,
    Decode,
    WriteOutput,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Validate => "validate",
            Stage::ReadInput => "read-input",
            Stage::Encode => "encode",
            Stage::Decode => "decode",
            Stage::WriteOutput => "write-output",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineErrorKind {
    #[error(transparent)]
    Spec(#[from] ImpairmentError),
    #[error(transparent)]
    Wave(#[from] WaveError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, thiserror::Error)]
#[error("impairment failed at stage {stage}: {kind}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub kind: PipelineErrorKind,
}

impl PipelineError {
    fn at(stage: Stage, kind: impl Into<PipelineErrorKind>) -> Self {
        PipelineError {
            stage,
            kind: kind.into(),
        }
    }
}

/// Runs the impairment chain. The output always has the input's sample
/// count: short decoder output is zero-padded, long output truncated.
pub fn impair_samples(
    samples: &[i16],
    spec: &ImpairmentSpec,
    codec: &dyn CodecAdapter,
) -> Result<Vec<i16>, PipelineError> {
    spec.validate().map_err(|e| PipelineError::at(Stage::Validate, e))?;
    let bitstream = codec
        .encode(samples)
        .map_err(|e| PipelineError::at(Stage::Encode, e))?;
    let corrupted = ge_corrupt(&bitstream, spec);
    let flags = drop_flags(codec.frame_count(corrupted.len()), spec.frame_drop_p, spec.seed);
    let mut out = codec
        .decode(&corrupted, &flags)
        .map_err(|e| PipelineError::at(Stage::Decode, e))?;
    out.resize(samples.len(), 0);
    Ok(out)
}

pub fn impair_recording(
    input: &Wave,
    spec: &ImpairmentSpec,
    codec: &dyn CodecAdapter,
) -> Result<Wave, PipelineError> {
    Ok(Wave::new(
        impair_samples(&input.samples, spec, codec)?,
        input.sample_rate,
    ))
}

pub fn impair_file(
    input: &Path,
    output: &Path,
    spec: &ImpairmentSpec,
    codec: &dyn CodecAdapter,
) -> Result<Wave, PipelineError> {
    let wave = wave_read(input).map_err(|e| PipelineError::at(Stage::ReadInput, e))?;
    let out = impair_recording(&wave, spec, codec)?;
    wave_write(output, &out.samples, out.sample_rate)
        .map_err(|e| PipelineError::at(Stage::WriteOutput, e))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::codec::{pcm_to_bytes, ExternalCodec, PassthroughCodec};
    use crate::model::PASSTHROUGH_CODEC;
    use crate::wave::tone;

    fn input() -> Wave {
        Wave::new(tone(440.0, 8_000, 8_000, 10_000), 8_000)
    }

    #[test]
    fn clean_chain_is_identity() {
        let w = input();
        let spec = ImpairmentSpec::clean(PASSTHROUGH_CODEC, 1);
        assert_eq!(impair_recording(&w, &spec, &PassthroughCodec::default()).unwrap(), w);
    }

    #[test]
    fn all_frames_dropped_is_silence() {
        let w = input();
        let spec = ImpairmentSpec::clean(PASSTHROUGH_CODEC, 1).with_frame_drop(1.0);
        let out = impair_recording(&w, &spec, &PassthroughCodec::default()).unwrap();
        assert_eq!(out.samples.len(), w.samples.len());
        assert!(out.samples.iter().all(|&s| s == 0));
    }

    #[test]
    fn burst_flips_match_corrupter() {
        let w = input();
        let spec = ImpairmentSpec::replica(PASSTHROUGH_CODEC, 10, 77);
        let out = impair_recording(&w, &spec, &PassthroughCodec::default()).unwrap();
        assert_ne!(out, w);
        let expected = ge_corrupt(&pcm_to_bytes(&w.samples), &spec);
        assert_eq!(pcm_to_bytes(&out.samples), expected);
    }

    #[test]
    fn invalid_spec_fails_at_validate() {
        let mut spec = ImpairmentSpec::clean(PASSTHROUGH_CODEC, 1);
        spec.p_bg = -0.1;
        let err = impair_samples(&[0; 10], &spec, &PassthroughCodec::default()).unwrap_err();
        assert_eq!(err.stage, Stage::Validate);
    }

    #[cfg(unix)]
    #[test]
    fn codec_failure_names_stage() {
        let codec = ExternalCodec::new("false", 320).unwrap();
        let spec = ImpairmentSpec::clean("external:false", 1);
        let err = impair_samples(&[0; 10], &spec, &codec).unwrap_err();
        assert_eq!(err.stage, Stage::Encode);
        assert!(err.to_string().contains("stage encode"));
    }

    #[cfg(unix)]
    #[test]
    fn duration_preserved_when_decoder_output_is_short() {
        use std::os::unix::fs::PermissionsExt;
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("halver.sh");
        std::fs::write(
            &script,
            "#!/bin/sh\nif [ \"$1\" = decode ]; then head -c 100; else cat; fi\n",
        )
        .unwrap();
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
        let codec = ExternalCodec::new(script.to_str().unwrap(), 320).unwrap();
        let w = input();
        let spec = ImpairmentSpec::clean("external", 1);
        let out = impair_recording(&w, &spec, &codec).unwrap();
        assert_eq!(out.samples.len(), w.samples.len());
        assert_eq!(&out.samples[..50], &w.samples[..50]);
        assert!(out.samples[50..].iter().all(|&s| s == 0));
    }

    #[test]
    fn file_round_trip_and_missing_input() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.wav");
        let b = dir.path().join("b.wav");
        let w = input();
        crate::wave::wave_write(&a, &w.samples, w.sample_rate).unwrap();
        let spec = ImpairmentSpec::clean(PASSTHROUGH_CODEC, 1);
        impair_file(&a, &b, &spec, &PassthroughCodec::default()).unwrap();
        assert_eq!(wave_read(&b).unwrap(), w);
        let err = impair_file(&dir.path().join("nope.wav"), &b, &spec, &PassthroughCodec::default())
            .unwrap_err();
        assert_eq!(err.stage, Stage::ReadInput);
    }
}
