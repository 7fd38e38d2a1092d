//! Codec adapters. The pass-through codec ships in-tree; real speech codecs
//! plug in as external processes:
//!
//! ```text
//! <cmd> encode --frame-size <bytes>   # stdin: 16-bit LE PCM, stdout: bitstream
//! <cmd> decode --frame-size <bytes>   # stdin: bitstream,     stdout: 16-bit LE PCM
//! ```
//!
//! A nonzero exit status is a codec failure. Dropped frames reach an
//! external decoder as all-zero frames.

use std::io::Write;
use std::process::{Command, Stdio};

use crate::model::PASSTHROUGH_CODEC;

/// 20 ms of 16-bit PCM at 8 kHz.
pub const DEFAULT_FRAME_SIZE: usize = 320;

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("unknown codec {0:?}")]
    Unknown(String),
    #[error("failed to run `{command}`: {source}")]
    Spawn {
        command: String,
        source: std::io::Error,
    },
    #[error("`{command}` exited with {status}: {stderr}")]
    Exit {
        command: String,
        status: std::process::ExitStatus,
        stderr: String,
    },
    #[error("{0}")]
    Invalid(String),
}

pub trait CodecAdapter: Send + Sync {
    fn name(&self) -> &str;

    fn frame_size_bytes(&self) -> usize;

    fn encode(&self, pcm: &[i16]) -> Result<Vec<u8>, CodecError>;

    /// `dropped[i]` marks frame `i` of the bitstream as lost.
    fn decode(&self, bitstream: &[u8], dropped: &[bool]) -> Result<Vec<i16>, CodecError>;

    fn frame_count(&self, bitstream_len: usize) -> usize {
        bitstream_len.div_ceil(self.frame_size_bytes())
    }
}

/// Little-endian PCM in, the same bytes out. Lost frames are zero-filled.
#[derive(Debug, Clone)]
pub struct PassthroughCodec {
    frame_size: usize,
}

impl PassthroughCodec {
    pub fn new(frame_size: usize) -> Result<Self, CodecError> {
        if frame_size == 0 || frame_size % 2 != 0 {
            return Err(CodecError::Invalid(format!(
                "pass-through frame size must be a positive even byte count, got {frame_size}"
            )));
        }
        Ok(PassthroughCodec { frame_size })
    }
}

impl Default for PassthroughCodec {
    fn default() -> Self {
        PassthroughCodec {
            frame_size: DEFAULT_FRAME_SIZE,
        }
    }
}

pub fn pcm_to_bytes(pcm: &[i16]) -> Vec<u8> {
    pcm.iter().flat_map(|s| s.to_le_bytes()).collect()
}

pub fn bytes_to_pcm(bytes: &[u8]) -> Vec<i16> {
    bytes
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]))
        .collect()
}

fn conceal_zero_fill(bitstream: &[u8], dropped: &[bool], frame_size: usize) -> Vec<u8> {
    let mut out = bitstream.to_vec();
    for (frame, &lost) in out.chunks_mut(frame_size).zip(dropped) {
        if lost {
            frame.fill(0);
        }
    }
    out
}

impl CodecAdapter for PassthroughCodec {
    fn name(&self) -> &str {
        PASSTHROUGH_CODEC
    }

    fn frame_size_bytes(&self) -> usize {
        self.frame_size
    }

    fn encode(&self, pcm: &[i16]) -> Result<Vec<u8>, CodecError> {
        Ok(pcm_to_bytes(pcm))
    }

    fn decode(&self, bitstream: &[u8], dropped: &[bool]) -> Result<Vec<i16>, CodecError> {
        Ok(bytes_to_pcm(&conceal_zero_fill(bitstream, dropped, self.frame_size)))
    }
}

/// Codec implemented by an external command speaking the stdin/stdout protocol.
#[derive(Debug, Clone)]
pub struct ExternalCodec {
    name: String,
    program: String,
    args: Vec<String>,
    frame_size: usize,
}

impl ExternalCodec {
    /// `command` is split on whitespace into program and leading arguments.
    pub fn new(command: &str, frame_size: usize) -> Result<Self, CodecError> {
        let mut parts = command.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| CodecError::Invalid("external codec command is empty".into()))?;
        if frame_size == 0 {
            return Err(CodecError::Invalid("frame size must be positive".into()));
        }
        Ok(ExternalCodec {
            name: format!("external:{command}"),
            program,
            args: parts.collect(),
            frame_size,
        })
    }

    fn run(&self, mode: &str, input: &[u8]) -> Result<Vec<u8>, CodecError> {
        let display = format!("{} {mode}", self.name.trim_start_matches("external:"));
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .arg(mode)
            .arg("--frame-size")
            .arg(self.frame_size.to_string())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| CodecError::Spawn {
                command: display.clone(),
                source,
            })?;
        let mut stdin = child.stdin.take().expect("stdin piped");
        let payload = input.to_vec();
        // Feed stdin from a thread so a chatty child cannot deadlock on a full stdout pipe.
        let writer = std::thread::spawn(move || {
            let _ = stdin.write_all(&payload);
        });
        let output = child.wait_with_output().map_err(|source| CodecError::Spawn {
            command: display.clone(),
            source,
        })?;
        let _ = writer.join();
        if !output.status.success() {
            return Err(CodecError::Exit {
                command: display,
                status: output.status,
                stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
            });
        }
        Ok(output.stdout)
    }
}

impl CodecAdapter for ExternalCodec {
    fn name(&self) -> &str {
        &self.name
    }

    fn frame_size_bytes(&self) -> usize {
        self.frame_size
    }

    fn encode(&self, pcm: &[i16]) -> Result<Vec<u8>, CodecError> {
        self.run("encode", &pcm_to_bytes(pcm))
    }

    fn decode(&self, bitstream: &[u8], dropped: &[bool]) -> Result<Vec<i16>, CodecError> {
        let concealed = conceal_zero_fill(bitstream, dropped, self.frame_size);
        Ok(bytes_to_pcm(&self.run("decode", &concealed)?))
    }
}

/// Resolves a codec id: `passthrough`, `external:<cmd>`, or
/// `external@<frame-bytes>:<cmd>`.
pub fn codec_from_id(id: &str) -> Result<Box<dyn CodecAdapter>, CodecError> {
    if id == PASSTHROUGH_CODEC {
        return Ok(Box::new(PassthroughCodec::default()));
    }
    if let Some(cmd) = id.strip_prefix("external:") {
        return Ok(Box::new(ExternalCodec::new(cmd, DEFAULT_FRAME_SIZE)?));
    }
    if let Some(rest) = id.strip_prefix("external@") {
        if let Some((size, cmd)) = rest.split_once(':') {
            let size = size
                .parse()
                .map_err(|_| CodecError::Invalid(format!("bad frame size in codec id {id:?}")))?;
            return Ok(Box::new(ExternalCodec::new(cmd, size)?));
        }
    }
    Err(CodecError::Unknown(id.to_string()))
}
