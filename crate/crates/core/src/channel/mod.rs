//! Channel impairment: codec adapters, burst-error corruption, frame loss.

pub mod codec;
pub mod frames;
pub mod gilbert_elliot;
pub mod pipeline;

pub use codec::{codec_from_id, CodecAdapter, CodecError, ExternalCodec, PassthroughCodec};
pub use frames::{drop_flags, drop_frames};
pub use gilbert_elliot::{expected_flip_fraction, ge_corrupt, ChannelState, GilbertElliotState};
pub use pipeline::{impair_file, impair_recording, impair_samples, PipelineError, Stage};
