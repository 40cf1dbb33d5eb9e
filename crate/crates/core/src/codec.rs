//! Pitch representations: scalar MIDI values, frequencies, and the
//! 128-dimensional probability-vector encoding.
//!
//! A pitch p in (0, 127] is spread over the two adjacent MIDI numbers
//! with weights (1 - frac, frac), so the expectation over the vector
//! recovers p exactly. MIDI 0 is the silence sentinel and encodes to the
//! all-zero vector, matching the loss masking of silent frames.

use thiserror::Error;

/// Entries of a pitch vector, one per MIDI number.
pub const VECTOR_LEN: usize = 128;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("pitch {0} outside the MIDI range [0, 127]")]
    PitchOutOfRange(f64),
}

/// Probability distribution over the 128 MIDI numbers.
///
/// Voiced vectors sum to 1; the silence vector is all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchVector(pub [f64; VECTOR_LEN]);

impl PitchVector {
    pub fn silence() -> Self {
        Self([0.0; VECTOR_LEN])
    }

    pub fn mass(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_silence(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

/// Encode a MIDI pitch as a two-point probability vector.
///
/// `encode(69.5)` puts 0.5 at both index 69 and 70; an integer pitch is
/// one-hot; 0 encodes silence. Pitches outside [0, 127] are rejected.
pub fn encode(pitch: f64) -> Result<PitchVector, CodecError> {
    if !pitch.is_finite() || !(0.0..=127.0).contains(&pitch) {
        return Err(CodecError::PitchOutOfRange(pitch));
    }
    let mut e = PitchVector::silence();
    if pitch == 0.0 {
        return Ok(e);
    }
    let m = pitch.floor() as usize;
    let frac = pitch - m as f64;
    e.0[m] = 1.0 - frac;
    if frac > 0.0 && m + 1 < VECTOR_LEN {
        e.0[m + 1] = frac;
    }
    Ok(e)
}

/// Reconstruct a pitch as the expectation p = sum_i i * e_i.
///
/// Vectors with total mass at or below 0.5 are treated as silence and
/// decode to 0.
pub fn decode(e: &PitchVector) -> f64 {
    if e.mass() <= 0.5 {
        return 0.0;
    }
    e.0.iter()
        .enumerate()
        .map(|(i, &v)| i as f64 * v)
        .sum()
}

/// Expectation restricted to a window around the strongest entry.
///
/// Robust variant of [`decode`] for model outputs whose probability mass
/// can include far-off stray components: only indices within `radius` of
/// the argmax contribute, and the restricted mass renormalizes the sum.
/// Total mass below 1e-6 decodes to silence.
pub fn decode_local(e: &PitchVector, radius: usize) -> f64 {
    if e.mass() < 1e-6 {
        return 0.0;
    }
    let argmax = e
        .0
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let lo = argmax.saturating_sub(radius);
    let hi = (argmax + radius + 1).min(VECTOR_LEN);
    let mut mass = 0.0;
    let mut moment = 0.0;
    for i in lo..hi {
        mass += e.0[i];
        moment += i as f64 * e.0[i];
    }
    if mass <= 0.0 {
        0.0
    } else {
        moment / mass
    }
}

/// Frequency of a MIDI pitch in 12-TET tuning with A4 = 440 Hz.
pub fn midi_to_hz(midi: f64) -> f64 {
    440.0 * ((midi - 69.0) / 12.0).exp2()
}

/// MIDI pitch of a frequency. Panics if the frequency is not positive.
pub fn hz_to_midi(hz: f64) -> f64 {
    assert!(hz > 0.0, "frequency must be positive, got {hz}");
    69.0 + 12.0 * (hz / 440.0).log2()
}
