//! Seed-reproducible dataset generators: synthesizer notes with analytic
//! labels, time-stretched vowels labeled by the tracker, and 7-second
//! segments of longer recordings.
//!
//! Every generator draws exclusively from a ChaCha stream seeded by the
//! config, in a fixed order (per slot: rest?, duration, pitch, amplitude,
//! waveform, phase; then the filter decision, the cutoff when applied, and
//! finally the noise samples), so outputs are bit-reproducible.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::audio::{write_wav, AudioBuffer, WavError, CANONICAL_RATE};
use crate::labeler::{self, write_label_csv, LabelCsvError, PitchTrack, TrackerConfig};

const SR: f64 = CANONICAL_RATE as f64;
const HOP_SECONDS: f64 = 0.01;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("vowel library is empty")]
    EmptyVowelLibrary,
    #[error("vowel sample {index} is shorter than 50 ms after silence trimming")]
    VowelTooShort { index: usize },
    #[error("wav error: {0}")]
    Wav(#[from] WavError),
    #[error("label csv error: {0}")]
    LabelCsv(#[from] LabelCsvError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Oscillator shapes available to the synthesizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Waveform {
    Sine,
    Triangle,
    Square,
    Sawtooth,
}

impl Waveform {
    pub const ALL: [Waveform; 4] = [
        Waveform::Sine,
        Waveform::Triangle,
        Waveform::Square,
        Waveform::Sawtooth,
    ];

    /// Amplitude at a phase given in cycles.
    pub fn value(&self, phase: f64) -> f64 {
        let p = phase.rem_euclid(1.0);
        match self {
            Waveform::Sine => (std::f64::consts::TAU * p).sin(),
            Waveform::Triangle => 4.0 * (p - 0.5).abs() - 1.0,
            Waveform::Square => {
                if p < 0.5 {
                    1.0
                } else {
                    -1.0
                }
            }
            Waveform::Sawtooth => 2.0 * p - 1.0,
        }
    }
}

/// Low-pass family applied to synthesizer output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    /// Second-order Butterworth biquad.
    Butterworth2,
    /// One-pole recursive smoother.
    SinglePole,
}

/// One note of a score.
#[derive(Debug, Clone, PartialEq)]
pub struct NoteEvent {
    pub onset: f64,
    pub duration: f64,
    pub pitch: f64,
    pub amplitude: f64,
}

/// Synthesizer dataset parameters.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub seed: u64,
    pub total_duration: f64,
    pub pitch_range: (f64, f64),
    pub duration_range: (f64, f64),
    pub rest_probability: f64,
    pub filter_probability: f64,
    pub cutoff_range: (f64, f64),
    /// Gaussian noise sigma as a fraction of the signal peak.
    pub noise_amplitude: f64,
    pub filter: FilterKind,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            total_duration: 7.0,
            pitch_range: (36.0, 84.0),
            duration_range: (0.1, 1.5),
            rest_probability: 0.2,
            filter_probability: 0.3,
            cutoff_range: (1000.0, 20000.0),
            noise_amplitude: 0.1,
            filter: FilterKind::Butterworth2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Synth,
    Vowel,
    Segmented,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Synth => "synth",
            Provenance::Vowel => "vowel",
            Provenance::Segmented => "segmented",
        }
    }
}

/// Paired audio and pitch labels plus generation provenance.
#[derive(Debug, Clone)]
pub struct DatasetSample {
    pub audio: AudioBuffer,
    pub labels: PitchTrack,
    pub provenance: Provenance,
    pub seed: u64,
    /// Cutoff of the low-pass applied to this sample, when one was.
    pub filter_cutoff_hz: Option<f64>,
}

/// Draw a sequence of non-overlapping notes tiling `total_duration`.
///
/// Slots are drawn in order (rest flag, duration, then pitch and amplitude
/// for notes); the final slot is truncated to fit. Pitches are continuous
/// in `pitch_range`; amplitudes uniform in [0.3, 0.9].
pub fn sample_score(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<NoteEvent> {
    sample_slots(config, rng, true)
        .into_iter()
        .filter_map(|slot| slot.note)
        .collect()
}

struct Slot {
    onset: f64,
    duration: f64,
    note: Option<NoteEvent>,
}

fn sample_slots(config: &SynthConfig, rng: &mut ChaCha8Rng, with_pitch: bool) -> Vec<Slot> {
    let mut slots = Vec::new();
    let mut t = 0.0;
    while config.total_duration - t > 1e-9 {
        let rest = rng.gen_range(0.0..1.0) < config.rest_probability;
        let duration = rng
            .gen_range(config.duration_range.0..=config.duration_range.1)
            .min(config.total_duration - t);
        let note = if rest {
            None
        } else if with_pitch {
            let pitch = rng.gen_range(config.pitch_range.0..=config.pitch_range.1);
            let amplitude = rng.gen_range(0.3..=0.9);
            Some(NoteEvent {
                onset: t,
                duration,
                pitch,
                amplitude,
            })
        } else {
            Some(NoteEvent {
                onset: t,
                duration,
                pitch: 0.0,
                amplitude: 1.0,
            })
        };
        slots.push(Slot {
            onset: t,
            duration,
            note,
        });
        t += duration;
    }
    slots
}

/// Render one note as a closed-form (band-unlimited) waveform with a
/// random starting phase and 5 ms linear fades on both ends.
pub fn render_note(
    pitch: f64,
    duration: f64,
    amplitude: f64,
    waveform: Waveform,
    rng: &mut ChaCha8Rng,
) -> AudioBuffer {
    let freq = crate::codec::midi_to_hz(pitch);
    let n = (duration * SR).round() as usize;
    let phase0 = rng.gen_range(0.0..1.0);
    let fade = ((0.005 * SR) as usize).min(n / 2);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let phase = phase0 + freq * i as f64 / SR;
        let mut s = amplitude * waveform.value(phase);
        if i < fade {
            s *= i as f64 / fade as f64;
        }
        if i >= n - fade {
            s *= (n - i) as f64 / fade as f64;
        }
        samples.push(s);
    }
    AudioBuffer::new(samples, CANONICAL_RATE)
}

struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

fn butterworth_lowpass(cutoff: f64, sample_rate: f64) -> Biquad {
    let omega = std::f64::consts::TAU * cutoff / sample_rate;
    let alpha = omega.sin() / std::f64::consts::SQRT_2;
    let cos = omega.cos();
    let a0 = 1.0 + alpha;
    Biquad {
        b0: (1.0 - cos) / 2.0 / a0,
        b1: (1.0 - cos) / a0,
        b2: (1.0 - cos) / 2.0 / a0,
        a1: -2.0 * cos / a0,
        a2: (1.0 - alpha) / a0,
    }
}

fn apply_lowpass(samples: &mut [f64], kind: FilterKind, cutoff: f64) {
    match kind {
        FilterKind::Butterworth2 => {
            let f = butterworth_lowpass(cutoff, SR);
            let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
            for s in samples.iter_mut() {
                let x0 = *s;
                let y0 = f.b0 * x0 + f.b1 * x1 + f.b2 * x2 - f.a1 * y1 - f.a2 * y2;
                x2 = x1;
                x1 = x0;
                y2 = y1;
                y1 = y0;
                *s = y0;
            }
        }
        FilterKind::SinglePole => {
            let a = (-std::f64::consts::TAU * cutoff / SR).exp();
            let mut y = 0.0;
            for s in samples.iter_mut() {
                y = (1.0 - a) * *s + a * y;
                *s = y;
            }
        }
    }
}

/// Labels on the 10 ms grid derived directly from a score: the pitch of
/// the covering note, or 0 in rests.
pub fn score_to_track(score: &[NoteEvent], total_duration: f64) -> PitchTrack {
    let samples = (total_duration * SR).round() as usize;
    let frames = samples.div_ceil(441);
    let mut midi = vec![0.0; frames];
    let frame_times: Vec<f64> = (0..frames).map(|w| w as f64 * HOP_SECONDS).collect();
    for note in score {
        for (w, &t) in frame_times.iter().enumerate() {
            if t >= note.onset && t < note.onset + note.duration {
                midi[w] = note.pitch;
            }
        }
    }
    PitchTrack { frame_times, midi }
}

/// Generate one synthesizer sample: score → per-note waveform render →
/// optional low-pass → Gaussian noise → hard clip at full scale.
///
/// Labels come from the score itself (the score is the ground truth), not
/// from the tracker. Noise sigma is `noise_amplitude` times the signal
/// peak; the noise draw happens last so a zero-noise run with the same
/// seed produces the identical clean signal.
pub fn synth_sample(config: &SynthConfig) -> DatasetSample {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let score = sample_score(config, &mut rng);
    let n = (config.total_duration * SR).round() as usize;
    let mut mix = vec![0.0f64; n];
    for note in &score {
        let waveform = Waveform::ALL[rng.gen_range(0..Waveform::ALL.len())];
        let rendered = render_note(note.pitch, note.duration, note.amplitude, waveform, &mut rng);
        let at = (note.onset * SR).round() as usize;
        for (i, &s) in rendered.samples.iter().enumerate() {
            if at + i < n {
                mix[at + i] += s;
            }
        }
    }
    let apply_filter = rng.gen_range(0.0..1.0) < config.filter_probability;
    let cutoff = if apply_filter {
        let c = rng.gen_range(config.cutoff_range.0..=config.cutoff_range.1);
        apply_lowpass(&mut mix, config.filter, c);
        Some(c)
    } else {
        None
    };
    if config.noise_amplitude > 0.0 {
        let peak = mix.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
        if peak > 0.0 {
            let normal = Normal::new(0.0, config.noise_amplitude * peak).unwrap();
            for s in mix.iter_mut() {
                *s += normal.sample(&mut rng);
            }
        }
    }
    for s in mix.iter_mut() {
        *s = s.clamp(-1.0, 1.0);
    }
    DatasetSample {
        audio: AudioBuffer::new(mix, CANONICAL_RATE),
        labels: score_to_track(&score, config.total_duration),
        provenance: Provenance::Synth,
        seed: config.seed,
        filter_cutoff_hz: cutoff,
    }
}

/// Trim leading and trailing low-energy content: 5 ms windows whose RMS
/// falls below 2% of the recording peak are dropped from both ends.
fn trim_silence(samples: &[f64]) -> &[f64] {
    let window = (0.005 * SR) as usize;
    if samples.is_empty() || window == 0 {
        return samples;
    }
    let peak = samples.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    if peak <= 0.0 {
        return &samples[..0];
    }
    let gate = 0.02 * peak;
    let rms = |chunk: &[f64]| -> f64 {
        (chunk.iter().map(|&s| s * s).sum::<f64>() / chunk.len() as f64).sqrt()
    };
    let n_chunks = samples.len().div_ceil(window);
    let mut first = None;
    let mut last = 0;
    for c in 0..n_chunks {
        let lo = c * window;
        let hi = (lo + window).min(samples.len());
        if rms(&samples[lo..hi]) >= gate {
            if first.is_none() {
                first = Some(lo);
            }
            last = hi;
        }
    }
    match first {
        Some(lo) => &samples[lo..last],
        None => &samples[..0],
    }
}

/// Stretch a clip to an exact sample count by linear-interpolation
/// resampling (a speed change: pitch scales by the inverse factor).
fn stretch_to(samples: &[f64], out_len: usize) -> Vec<f64> {
    if samples.is_empty() || out_len == 0 {
        return vec![0.0; out_len];
    }
    let step = samples.len() as f64 / out_len as f64;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * step;
            let lo = pos.floor() as usize;
            let frac = pos - lo as f64;
            let a = samples[lo.min(samples.len() - 1)];
            let b = samples[(lo + 1).min(samples.len() - 1)];
            a * (1.0 - frac) + b * frac
        })
        .collect()
}

/// Generate a time-stretched vowel sample.
///
/// A score is drawn without pitches; each note slot is filled by a
/// uniformly chosen library clip, silence-trimmed and stretched to the
/// note duration. The assembled audio is auto-labeled by the tracker,
/// which accounts for the pitch shift the stretching introduces.
pub fn vowel_sample(
    library: &[AudioBuffer],
    config: &SynthConfig,
) -> Result<DatasetSample, DatagenError> {
    if library.is_empty() {
        return Err(DatagenError::EmptyVowelLibrary);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let slots = sample_slots(config, &mut rng, false);
    let n = (config.total_duration * SR).round() as usize;
    let mut mix = vec![0.0f64; n];
    for slot in &slots {
        if slot.note.is_none() {
            continue;
        }
        let index = rng.gen_range(0..library.len());
        let trimmed = trim_silence(&library[index].samples);
        if (trimmed.len() as f64) < 0.05 * SR {
            return Err(DatagenError::VowelTooShort { index });
        }
        let out_len = (slot.duration * SR).round() as usize;
        let stretched = stretch_to(trimmed, out_len);
        let at = (slot.onset * SR).round() as usize;
        for (i, &s) in stretched.iter().enumerate() {
            if at + i < n {
                mix[at + i] += s;
            }
        }
    }
    for s in mix.iter_mut() {
        *s = s.clamp(-1.0, 1.0);
    }
    let audio = AudioBuffer::new(mix, CANONICAL_RATE);
    let labels = labeler::label(&audio, &TrackerConfig::default());
    Ok(DatasetSample {
        audio,
        labels,
        provenance: Provenance::Vowel,
        seed: config.seed,
        filter_cutoff_hz: None,
    })
}

/// Split a recording into fixed-length segments (default 7 s), zero-padding
/// the final one, and auto-label each with the tracker.
pub fn segment_and_label(recording: &AudioBuffer, segment_s: f64) -> Vec<DatasetSample> {
    assert_eq!(recording.sample_rate, CANONICAL_RATE);
    let seg_len = (segment_s * SR).round() as usize;
    if recording.samples.is_empty() || seg_len == 0 {
        return Vec::new();
    }
    let count = recording.samples.len().div_ceil(seg_len);
    let tracker = TrackerConfig::default();
    (0..count)
        .map(|i| {
            let lo = i * seg_len;
            let hi = ((i + 1) * seg_len).min(recording.samples.len());
            let mut samples = recording.samples[lo..hi].to_vec();
            samples.resize(seg_len, 0.0);
            let audio = AudioBuffer::new(samples, CANONICAL_RATE);
            let labels = labeler::label(&audio, &tracker);
            DatasetSample {
                audio,
                labels,
                provenance: Provenance::Segmented,
                seed: 0,
                filter_cutoff_hz: None,
            }
        })
        .collect()
}

/// One manifest row.
#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub name: String,
    pub provenance: Provenance,
    pub seed: u64,
    pub duration_s: f64,
}

/// Write a sample's wav and label csv under `dir` as `<name>.wav` and
/// `<name>.csv`.
pub fn write_sample(
    dir: impl AsRef<Path>,
    name: &str,
    sample: &DatasetSample,
) -> Result<(), DatagenError> {
    let dir = dir.as_ref();
    write_wav(&sample.audio, dir.join(format!("{name}.wav")))?;
    write_label_csv(&sample.labels, dir.join(format!("{name}.csv")))?;
    Ok(())
}

/// Write `manifest.csv` with schema `name,provenance,seed,duration_s`.
/// An optional command echo goes in a leading `#` comment line.
pub fn write_manifest(
    path: impl AsRef<Path>,
    entries: &[ManifestEntry],
    command_echo: Option<&str>,
) -> Result<(), DatagenError> {
    let mut out = String::new();
    if let Some(cmd) = command_echo {
        out.push_str(&format!("# command: {cmd}\n"));
    }
    out.push_str("name,provenance,seed,duration_s\n");
    for e in entries {
        out.push_str(&format!(
            "{},{},{},{:.3}\n",
            e.name,
            e.provenance.as_str(),
            e.seed,
            e.duration_s
        ));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::midi_to_hz;
    use crate::metrics;
    use std::f64::consts::TAU;

    fn rng_for(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Kolmogorov-Smirnov distance of a sample against U(lo, hi).
    fn ks_distance_uniform(values: &[f64], lo: f64, hi: f64) -> f64 {
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len() as f64;
        let mut d: f64 = 0.0;
        for (i, &v) in sorted.iter().enumerate() {
            let cdf = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
            let upper = (i as f64 + 1.0) / n - cdf;
            let lower = cdf - i as f64 / n;
            d = d.max(upper).max(lower);
        }
        d
    }

    #[test]
    fn scores_are_seed_deterministic() {
        let config = SynthConfig::default();
        let a = sample_score(&config, &mut rng_for(42));
        let b = sample_score(&config, &mut rng_for(42));
        assert_eq!(a, b);
        let c = sample_score(&config, &mut rng_for(43));
        assert_ne!(a, c);
    }

    #[test]
    fn sampled_pitches_look_uniform() {
        let config = SynthConfig {
            total_duration: 1e9, // effectively unbounded; we stop at 10k notes
            rest_probability: 0.0,
            ..SynthConfig::default()
        };
        let mut rng = rng_for(7);
        let mut pitches = Vec::with_capacity(10_000);
        // Draw in the documented slot order without materializing the score.
        while pitches.len() < 10_000 {
            let _rest = rng.gen_range(0.0..1.0);
            let _duration: f64 =
                rng.gen_range(config.duration_range.0..=config.duration_range.1);
            pitches.push(rng.gen_range(config.pitch_range.0..=config.pitch_range.1));
            let _amp: f64 = rng.gen_range(0.3..=0.9);
        }
        let (lo, hi) = config.pitch_range;
        let min = pitches.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        let max = pitches.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        assert!(min >= lo && max <= hi);
        // Asymptotic KS critical value at alpha = 0.01: 1.6276 / sqrt(n).
        let d = ks_distance_uniform(&pitches, lo, hi);
        assert!(d < 1.6276 / (10_000f64).sqrt(), "KS distance {d}");
    }

    #[test]
    fn zero_rest_probability_tiles_the_duration() {
        let config = SynthConfig {
            rest_probability: 0.0,
            total_duration: 5.0,
            ..SynthConfig::default()
        };
        let score = sample_score(&config, &mut rng_for(1));
        let mut t = 0.0;
        for note in &score {
            assert!((note.onset - t).abs() < 1e-9, "gap before {}", note.onset);
            t = note.onset + note.duration;
        }
        assert!((t - 5.0).abs() < 1e-9);
    }

    #[test]
    fn rendered_sine_peaks_at_440() {
        let note = render_note(69.0, 0.5, 0.8, Waveform::Sine, &mut rng_for(2));
        // Coarse DFT peak over 4096 samples from the steady interior.
        let x = &note.samples[2048..2048 + 4096];
        let mut best = (0usize, 0.0f64);
        for k in 1..2048 {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &s) in x.iter().enumerate() {
                let ang = TAU * k as f64 * i as f64 / 4096.0;
                re += s * ang.cos();
                im -= s * ang.sin();
            }
            let mag = re * re + im * im;
            if mag > best.1 {
                best = (k, mag);
            }
        }
        let freq = best.0 as f64 * SR / 4096.0;
        assert!((freq - 440.0).abs() <= SR / 4096.0, "peak at {freq}");
    }

    #[test]
    fn square_wave_interior_is_two_valued() {
        let note = render_note(60.0, 0.2, 0.7, Waveform::Square, &mut rng_for(3));
        let fade = (0.005 * SR) as usize;
        for &s in &note.samples[fade..note.samples.len() - fade] {
            assert!(
                (s.abs() - 0.7).abs() < 1e-12,
                "interior sample {s} not at +-0.7"
            );
        }
    }

    #[test]
    fn sawtooth_has_second_and_third_harmonics() {
        // Bin-aligned fundamental so harmonics land on bins: k=32 of 4096.
        let freq = 32.0 * SR / 4096.0;
        let pitch = crate::codec::hz_to_midi(freq);
        let note = render_note(pitch, 0.2, 0.8, Waveform::Sawtooth, &mut rng_for(4));
        let x = &note.samples[1024..1024 + 4096];
        let mag = |k: usize| -> f64 {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &s) in x.iter().enumerate() {
                let ang = TAU * k as f64 * i as f64 / 4096.0;
                re += s * ang.cos();
                im -= s * ang.sin();
            }
            (re * re + im * im).sqrt()
        };
        let fundamental = mag(32);
        assert!(mag(64) > 0.01 * fundamental, "2f energy too small");
        assert!(mag(96) > 0.01 * fundamental, "3f energy too small");
    }

    #[test]
    fn synth_labels_match_score_mid_note() {
        let config = SynthConfig {
            seed: 5,
            total_duration: 3.0,
            ..SynthConfig::default()
        };
        let mut rng = rng_for(config.seed);
        let score = sample_score(&config, &mut rng);
        let sample = synth_sample(&config);
        for note in &score {
            let mid = note.onset + note.duration / 2.0;
            let frame = (mid / HOP_SECONDS) as usize;
            if frame < sample.labels.len() {
                assert_eq!(
                    sample.labels.midi[frame], note.pitch,
                    "label at frame {frame} is not the score pitch"
                );
            }
        }
    }

    #[test]
    fn noise_injection_lands_at_20db() {
        let base = SynthConfig {
            seed: 6,
            total_duration: 3.0,
            rest_probability: 0.0,
            filter_probability: 0.0,
            ..SynthConfig::default()
        };
        let noisy_cfg = SynthConfig {
            noise_amplitude: 0.1,
            ..base.clone()
        };
        let clean_cfg = SynthConfig {
            noise_amplitude: 0.0,
            ..base
        };
        let noisy = synth_sample(&noisy_cfg);
        let clean = synth_sample(&clean_cfg);
        let peak = clean.audio.peak();
        let residual: Vec<f64> = noisy
            .audio
            .samples
            .iter()
            .zip(&clean.audio.samples)
            .map(|(a, b)| a - b)
            .collect();
        let rms = (residual.iter().map(|&r| r * r).sum::<f64>() / residual.len() as f64).sqrt();
        let snr_db = 20.0 * (peak / rms).log10();
        assert!((snr_db - 20.0).abs() <= 1.0, "snr {snr_db} dB");
    }

    #[test]
    fn filter_rate_and_cutoff_distribution() {
        let mut applied = 0usize;
        let mut cutoffs = Vec::new();
        for seed in 0..1000u64 {
            let config = SynthConfig {
                seed,
                total_duration: 0.5,
                ..SynthConfig::default()
            };
            let sample = synth_sample(&config);
            if let Some(c) = sample.filter_cutoff_hz {
                applied += 1;
                cutoffs.push(c);
            }
        }
        let rate = applied as f64 / 1000.0;
        assert!(
            (rate - 0.30).abs() <= 0.03,
            "filter rate {rate} outside 30% +- 3%"
        );
        let d = ks_distance_uniform(&cutoffs, 1000.0, 20000.0);
        let critical = 1.6276 / (cutoffs.len() as f64).sqrt();
        assert!(d < critical, "cutoff KS distance {d} vs {critical}");
    }

    #[test]
    fn stretching_drops_pitch_by_an_octave() {
        // A synthetic "vowel": harmonic-rich 180 Hz tone.
        let n = (0.8 * SR) as usize;
        let vowel: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / SR;
                let f = 180.0;
                0.5 * (TAU * f * t).sin()
                    + 0.25 * (TAU * 2.0 * f * t).sin()
                    + 0.12 * (TAU * 3.0 * f * t).sin()
            })
            .collect();
        let tracker = TrackerConfig::default();
        let original = AudioBuffer::new(vowel.clone(), CANONICAL_RATE);
        let stretched = AudioBuffer::new(stretch_to(&vowel, 2 * n), CANONICAL_RATE);
        let median = |track: &PitchTrack| -> f64 {
            let mut voiced: Vec<f64> =
                track.midi.iter().copied().filter(|&m| m != 0.0).collect();
            voiced.sort_by(|a, b| a.partial_cmp(b).unwrap());
            voiced[voiced.len() / 2]
        };
        let m_orig = median(&labeler::label(&original, &tracker));
        let m_stretched = median(&labeler::label(&stretched, &tracker));
        assert!(
            ((m_orig - m_stretched) - 12.0).abs() <= 0.5,
            "stretch shifted {m_orig} to {m_stretched}, not an octave"
        );
    }

    #[test]
    fn unit_stretch_preserves_duration() {
        let samples: Vec<f64> = (0..4410).map(|i| (i as f64 * 0.01).sin()).collect();
        let out = stretch_to(&samples, 4410);
        assert_eq!(out.len(), 4410);
        for (a, b) in samples.iter().zip(&out) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn vowel_sample_gaps_are_unvoiced() {
        let n = (0.5 * SR) as usize;
        let vowel: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / SR;
                0.6 * (TAU * 200.0 * t).sin() + 0.2 * (TAU * 400.0 * t).sin()
            })
            .collect();
        let library = vec![AudioBuffer::new(vowel, CANONICAL_RATE)];
        let config = SynthConfig {
            seed: 8,
            total_duration: 3.0,
            rest_probability: 0.5,
            duration_range: (0.3, 0.6),
            ..SynthConfig::default()
        };
        let mut rng = rng_for(config.seed);
        let slots = sample_slots(&config, &mut rng, false);
        let sample = vowel_sample(&library, &config).unwrap();
        for slot in slots.iter().filter(|s| s.note.is_none()) {
            // Interior of the rest, away from the analysis-window halo.
            let first = ((slot.onset + 0.03) / HOP_SECONDS).ceil() as usize;
            let last = ((slot.onset + slot.duration - 0.03) / HOP_SECONDS).floor() as usize;
            for w in first..=last.min(sample.labels.len().saturating_sub(1)) {
                assert_eq!(
                    sample.labels.midi[w], 0.0,
                    "rest frame {w} labeled voiced"
                );
            }
        }
    }

    #[test]
    fn empty_library_is_an_error() {
        let config = SynthConfig::default();
        assert!(matches!(
            vowel_sample(&[], &config),
            Err(DatagenError::EmptyVowelLibrary)
        ));
    }

    #[test]
    fn short_vowel_is_an_error() {
        let library = vec![AudioBuffer::new(vec![0.5; 441], CANONICAL_RATE)]; // 10 ms
        let config = SynthConfig {
            rest_probability: 0.0,
            ..SynthConfig::default()
        };
        assert!(matches!(
            vowel_sample(&library, &config),
            Err(DatagenError::VowelTooShort { .. })
        ));
    }

    #[test]
    fn twenty_seconds_make_three_segments() {
        let samples: Vec<f64> = (0..20 * 44100)
            .map(|i| 0.4 * (TAU * 220.0 * i as f64 / SR).sin())
            .collect();
        let recording = AudioBuffer::new(samples, CANONICAL_RATE);
        let segments = segment_and_label(&recording, 7.0);
        assert_eq!(segments.len(), 3);
        for seg in &segments {
            assert_eq!(seg.audio.samples.len(), 308_700);
            assert_eq!(seg.labels.len(), 700, "label track not on the 7 s grid");
        }
        // The last segment's final second is zero padding: unvoiced labels.
        let last = &segments[2];
        for w in 620..700 {
            assert_eq!(last.labels.midi[w], 0.0, "padded frame {w} voiced");
        }
        assert!(segment_and_label(&AudioBuffer::new(vec![], CANONICAL_RATE), 7.0).is_empty());
    }

    #[test]
    fn generators_are_bit_reproducible() {
        let config = SynthConfig {
            seed: 9,
            total_duration: 2.0,
            ..SynthConfig::default()
        };
        let a = synth_sample(&config);
        let b = synth_sample(&config);
        assert_eq!(a.audio, b.audio);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.filter_cutoff_hz, b.filter_cutoff_hz);
    }

    #[test]
    fn labeler_cross_validates_analytic_labels() {
        // Noiseless, unfiltered renders in the tracker's reliable band
        // (513 autocorrelation lags bound it below at about 86 Hz), with
        // enough rests that notes are mostly isolated: analytic labels and
        // tracker labels agree within 50 cents on at least 95% of voiced
        // frames. Sustained legato octave jumps can still drag the Viterbi
        // path to a neighbor octave on short notes, which is why the rest
        // density matters here.
        let mut agree = 0usize;
        let mut total = 0usize;
        for seed in 0..20u64 {
            let config = SynthConfig {
                seed,
                total_duration: 3.0,
                pitch_range: (45.0, 81.0),
                duration_range: (0.2, 0.6),
                rest_probability: 0.6,
                noise_amplitude: 0.0,
                filter_probability: 0.0,
                ..SynthConfig::default()
            };
            let sample = synth_sample(&config);
            let estimated = labeler::label(&sample.audio, &TrackerConfig::default());
            let errors = metrics::frame_errors(&estimated, &sample.labels).unwrap();
            total += errors.len();
            agree += errors.iter().filter(|&&e| e <= 50.0).count();
        }
        let rate = agree as f64 / total as f64;
        assert!(rate >= 0.95, "agreement {rate} over {total} frames");
    }

    #[test]
    fn manifest_rows_and_durations() {
        let dir = tempfile::tempdir().unwrap();
        let entries = vec![
            ManifestEntry {
                name: "synth_00000".into(),
                provenance: Provenance::Synth,
                seed: 1,
                duration_s: 7.0,
            },
            ManifestEntry {
                name: "synth_00001".into(),
                provenance: Provenance::Synth,
                seed: 2,
                duration_s: 7.0,
            },
        ];
        let path = dir.path().join("manifest.csv");
        write_manifest(&path, &entries, Some("synthgen --count 2")).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# command: synthgen --count 2\n"));
        assert!(text.contains("name,provenance,seed,duration_s\n"));
        // Durations from the rows sum to the expected total.
        let total: f64 = text
            .lines()
            .skip(2)
            .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
            .sum();
        assert!((total - 14.0).abs() < 1e-9);
    }
}
