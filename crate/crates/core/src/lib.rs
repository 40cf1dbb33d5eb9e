//! Voice pitch estimation toolkit.
//!
//! The crate covers the full non-training pipeline for monophonic pitch
//! tracking of the singing voice:
//!
//! * [`audio`] — WAV ingestion and the canonical 44.1 kHz mono buffer.
//! * [`dsp`] — the T×4×513 feature tensor: amplitude, vocoder-corrected
//!   phase, window-corrected autocorrelation, and volume per 10 ms frame.
//! * [`codec`] — the 128-dimensional MIDI probability-vector encoding.
//! * [`labeler`] — a classical autocorrelation pitch tracker (candidate
//!   peaks plus Viterbi smoothing) used for auto-labeling.
//! * [`datagen`] — synthetic note, time-stretched vowel, and segmented
//!   recording dataset generators, all seed-reproducible.
//! * [`model`] — a forward-only convolutional inference engine with a
//!   binary weight format and the masked KL validation loss.
//! * [`metrics`] — 50-cent accuracy and cent-error statistics, with the
//!   ±10 ms delayed comparison variant.

pub mod audio;
pub mod codec;
pub mod datagen;
pub mod dsp;
pub mod labeler;
pub mod metrics;
pub mod model;

pub use audio::AudioBuffer;
pub use dsp::{FeatureTensor, FrameSpec};
pub use labeler::{PitchTrack, TrackerConfig};
