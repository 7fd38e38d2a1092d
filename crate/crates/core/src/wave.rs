//! RIFF/WAVE I/O restricted to PCM, mono, 16-bit little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor, Read, Seek, Write};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum WaveError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed WAVE data: {0}")]
    Malformed(String),
    #[error("unsupported WAVE encoding: {channels} channel(s), {bits} bits, {format}")]
    Unsupported {
        channels: u16,
        bits: u16,
        format: &'static str,
    },
}

impl From<hound::Error> for WaveError {
    fn from(err: hound::Error) -> Self {
        match err {
            hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
                WaveError::Malformed("unexpected end of data".into())
            }
            hound::Error::IoError(io) => WaveError::Io(io),
            other => WaveError::Malformed(other.to_string()),
        }
    }
}

/// Decoded mono PCM audio.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Wave {
    pub samples: Vec<i16>,
    pub sample_rate: u32,
}

impl Wave {
    pub fn new(samples: Vec<i16>, sample_rate: u32) -> Self {
        Wave {
            samples,
            sample_rate,
        }
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

fn spec_for(sample_rate: u32) -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

fn check_spec(spec: hound::WavSpec) -> Result<(), WaveError> {
    if spec.channels != 1
        || spec.bits_per_sample != 16
        || spec.sample_format != hound::SampleFormat::Int
    {
        return Err(WaveError::Unsupported {
            channels: spec.channels,
            bits: spec.bits_per_sample,
            format: match spec.sample_format {
                hound::SampleFormat::Int => "integer PCM",
                hound::SampleFormat::Float => "IEEE float",
            },
        });
    }
    Ok(())
}

fn read_from<R: Read>(reader: R) -> Result<Wave, WaveError> {
    let mut wav = hound::WavReader::new(reader)?;
    let spec = wav.spec();
    check_spec(spec)?;
    let samples = wav.samples::<i16>().collect::<Result<Vec<_>, _>>()?;
    Ok(Wave::new(samples, spec.sample_rate))
}

fn write_to<W: Write + Seek>(writer: W, samples: &[i16], sample_rate: u32) -> Result<(), WaveError> {
    if sample_rate == 0 {
        return Err(WaveError::Malformed("sample rate must be positive".into()));
    }
    let mut wav = hound::WavWriter::new(writer, spec_for(sample_rate))?;
    {
        let mut pcm = wav.get_i16_writer(samples.len() as u32);
        for &s in samples {
            pcm.write_sample(s);
        }
        pcm.flush()?;
    }
    wav.finalize()?;
    Ok(())
}

pub fn wave_read(path: impl AsRef<Path>) -> Result<Wave, WaveError> {
    read_from(BufReader::new(File::open(path)?))
}

pub fn wave_write(path: impl AsRef<Path>, samples: &[i16], sample_rate: u32) -> Result<(), WaveError> {
    write_to(BufWriter::new(File::create(path)?), samples, sample_rate)
}

pub fn wave_from_bytes(bytes: &[u8]) -> Result<Wave, WaveError> {
    read_from(Cursor::new(bytes))
}

pub fn wave_to_bytes(samples: &[i16], sample_rate: u32) -> Result<Vec<u8>, WaveError> {
    let mut cursor = Cursor::new(Vec::with_capacity(44 + samples.len() * 2));
    write_to(&mut cursor, samples, sample_rate)?;
    Ok(cursor.into_inner())
}

/// Reads only the header and checks the encoding, returning the sample rate.
pub fn wave_probe(path: impl AsRef<Path>) -> Result<u32, WaveError> {
    let wav = hound::WavReader::new(BufReader::new(File::open(path)?))?;
    let spec = wav.spec();
    check_spec(spec)?;
    Ok(spec.sample_rate)
}

/// A sine tone, used for fixtures and for the synthetic source-audio stub.
pub fn tone(freq_hz: f64, sample_rate: u32, samples: usize, amplitude: i16) -> Vec<i16> {
    (0..samples)
        .map(|n| {
            let t = n as f64 / f64::from(sample_rate);
            (f64::from(amplitude) * (2.0 * std::f64::consts::PI * freq_hz * t).sin()).round() as i16
        })
        .collect()
}
