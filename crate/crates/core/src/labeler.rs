//! Classical autocorrelation pitch tracker for auto-labeling.
//!
//! Per frame, local maxima of the window-corrected autocorrelation within
//! the configured lag band become voiced candidates, refined by three-point
//! parabolic interpolation and biased toward higher frequencies by the
//! octave cost. An unvoiced candidate with strength equal to the voicing
//! threshold is always present. A Viterbi pass then picks the path that
//! maximizes total candidate strength minus transition costs (a fixed cost
//! for voicing changes, a log2-frequency-ratio cost between voiced frames).

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::audio::AudioBuffer;
use crate::codec::hz_to_midi;
use crate::dsp::{preprocess, FrameSpec};

/// Tracker parameters. The defaults follow the published values of the
/// classical autocorrelation method.
#[derive(Debug, Clone)]
pub struct TrackerConfig {
    pub f_min: f64,
    pub f_max: f64,
    pub voicing_threshold: f64,
    pub silence_threshold: f64,
    pub octave_cost: f64,
    pub voiced_unvoiced_cost: f64,
    pub octave_jump_cost: f64,
    pub max_candidates: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            f_min: 55.0,
            f_max: 1760.0,
            voicing_threshold: 0.45,
            silence_threshold: 0.03,
            octave_cost: 0.01,
            voiced_unvoiced_cost: 0.14,
            octave_jump_cost: 0.35,
            max_candidates: 15,
        }
    }
}

/// One pitch hypothesis for a frame. Lag 0 marks the unvoiced candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchCandidate {
    /// Period in (fractional) samples; 0 for unvoiced.
    pub lag: f64,
    pub strength: f64,
}

impl PitchCandidate {
    pub fn unvoiced(strength: f64) -> Self {
        Self { lag: 0.0, strength }
    }

    pub fn is_voiced(&self) -> bool {
        self.lag > 0.0
    }

    pub fn frequency(&self, sample_rate: f64) -> f64 {
        sample_rate / self.lag
    }
}

/// Per-frame MIDI pitch values on the 10 ms grid; 0 marks unvoiced frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchTrack {
    pub frame_times: Vec<f64>,
    pub midi: Vec<f64>,
}

impl PitchTrack {
    pub fn len(&self) -> usize {
        self.midi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.midi.is_empty()
    }

    pub fn voiced_count(&self) -> usize {
        self.midi.iter().filter(|&&m| m != 0.0).count()
    }
}

#[derive(Debug, Error)]
pub enum LabelCsvError {
    #[error("malformed label csv at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Serialize a track as `time_s,midi` rows, one per 10 ms frame.
///
/// Voiced pitches carry six decimal places; unvoiced frames are written
/// as a bare 0.
pub fn write_label_csv(track: &PitchTrack, path: impl AsRef<Path>) -> Result<(), LabelCsvError> {
    let mut out = String::with_capacity(16 * track.len() + 16);
    out.push_str("time_s,midi\n");
    for (t, &m) in track.frame_times.iter().zip(&track.midi) {
        if m == 0.0 {
            out.push_str(&format!("{t:.2},0\n"));
        } else {
            out.push_str(&format!("{t:.2},{m:.6}\n"));
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Parse a label CSV written by [`write_label_csv`].
pub fn read_label_csv(path: impl AsRef<Path>) -> Result<PitchTrack, LabelCsvError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "time_s,midi" => {}
        Some((_, header)) => {
            return Err(LabelCsvError::Malformed {
                line: 1,
                reason: format!("expected header 'time_s,midi', found '{header}'"),
            })
        }
        None => {
            return Err(LabelCsvError::Malformed {
                line: 1,
                reason: "empty file".into(),
            })
        }
    }
    let mut frame_times = Vec::new();
    let mut midi = Vec::new();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (t, m) = match (parts.next(), parts.next(), parts.next()) {
            (Some(t), Some(m), None) => (t, m),
            _ => {
                return Err(LabelCsvError::Malformed {
                    line: idx + 1,
                    reason: "expected exactly two comma-separated fields".into(),
                })
            }
        };
        let parse = |s: &str| -> Result<f64, LabelCsvError> {
            s.trim().parse().map_err(|_| LabelCsvError::Malformed {
                line: idx + 1,
                reason: format!("not a number: '{s}'"),
            })
        };
        frame_times.push(parse(t)?);
        midi.push(parse(m)?);
    }
    Ok(PitchTrack { frame_times, midi })
}

/// Extract pitch candidates from one corrected-autocorrelation row.
///
/// Local maxima within the lag band [rate/f_max, min(rate/f_min, rows-2)]
/// are refined by parabolic interpolation; strength is the interpolated
/// peak value minus `octave_cost * log2(f_min * lag / rate)`, which grants
/// higher frequencies a small bonus. The unvoiced candidate (strength
/// exactly `voicing_threshold`) is always first; the strongest voiced
/// candidates follow in descending strength, capped at `max_candidates`.
pub fn candidates_for_frame(
    r: &[f64],
    config: &TrackerConfig,
    sample_rate: f64,
) -> Vec<PitchCandidate> {
    let mut voiced: Vec<PitchCandidate> = Vec::new();
    let lag_lo = (sample_rate / config.f_max).ceil().max(1.0) as usize;
    let lag_hi = ((sample_rate / config.f_min).floor() as usize).min(r.len().saturating_sub(2));
    let mut lag = lag_lo.max(1);
    while lag <= lag_hi {
        if r[lag] > r[lag - 1] && r[lag] > r[lag + 1] {
            let (prev, here, next) = (r[lag - 1], r[lag], r[lag + 1]);
            let denom = prev - 2.0 * here + next;
            let mut delta = if denom.abs() > 1e-300 {
                0.5 * (prev - next) / denom
            } else {
                0.0
            };
            if delta.abs() >= 1.0 {
                delta = 0.0;
            }
            let peak = here - 0.25 * (prev - next) * delta;
            let refined_lag = lag as f64 + delta;
            let penalty = config.octave_cost * (config.f_min * refined_lag / sample_rate).log2();
            voiced.push(PitchCandidate {
                lag: refined_lag,
                strength: peak - penalty,
            });
        }
        lag += 1;
    }
    voiced.sort_by(|a, b| b.strength.partial_cmp(&a.strength).unwrap());
    voiced.truncate(config.max_candidates.saturating_sub(1));
    let mut out = vec![PitchCandidate::unvoiced(config.voicing_threshold)];
    out.extend(voiced);
    out
}

/// Viterbi smoothing over per-frame candidate lists.
///
/// The path minimizes sum of transition costs minus candidate strengths.
/// Transition cost is 0 between two unvoiced frames, `voiced_unvoiced_cost`
/// on a voicing change, and `octave_jump_cost * |log2(f1/f2)|` between
/// voiced frames. Ties resolve to the lowest candidate index (strict
/// less-than relaxation scanning predecessors in order, and the earliest
/// argmin at the final frame). Selected lags convert to MIDI with 0 for
/// unvoiced.
pub fn best_path(
    candidates: &[Vec<PitchCandidate>],
    frame_times: &[f64],
    sample_rate: f64,
    config: &TrackerConfig,
) -> PitchTrack {
    assert_eq!(candidates.len(), frame_times.len());
    let t_len = candidates.len();
    if t_len == 0 {
        return PitchTrack {
            frame_times: Vec::new(),
            midi: Vec::new(),
        };
    }

    let mut cost: Vec<Vec<f64>> = Vec::with_capacity(t_len);
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(t_len);
    cost.push(candidates[0].iter().map(|c| -c.strength).collect());
    back.push(vec![0; candidates[0].len()]);

    for t in 1..t_len {
        let mut row = Vec::with_capacity(candidates[t].len());
        let mut brow = Vec::with_capacity(candidates[t].len());
        for cand in &candidates[t] {
            let mut best = f64::INFINITY;
            let mut best_prev = 0;
            for (k, prev) in candidates[t - 1].iter().enumerate() {
                let trans = transition_cost(prev, cand, config);
                let total = cost[t - 1][k] + trans;
                if total < best {
                    best = total;
                    best_prev = k;
                }
            }
            row.push(best - cand.strength);
            brow.push(best_prev);
        }
        cost.push(row);
        back.push(brow);
    }

    let mut path = vec![0usize; t_len];
    let last = &cost[t_len - 1];
    let mut best = f64::INFINITY;
    for (j, &c) in last.iter().enumerate() {
        if c < best {
            best = c;
            path[t_len - 1] = j;
        }
    }
    for t in (1..t_len).rev() {
        path[t - 1] = back[t][path[t]];
    }

    let midi = path
        .iter()
        .enumerate()
        .map(|(t, &j)| {
            let c = &candidates[t][j];
            if c.is_voiced() {
                hz_to_midi(c.frequency(sample_rate))
            } else {
                0.0
            }
        })
        .collect();
    PitchTrack {
        frame_times: frame_times.to_vec(),
        midi,
    }
}

fn transition_cost(a: &PitchCandidate, b: &PitchCandidate, config: &TrackerConfig) -> f64 {
    match (a.is_voiced(), b.is_voiced()) {
        (false, false) => 0.0,
        (true, true) => config.octave_jump_cost * (b.lag / a.lag).log2().abs(),
        _ => config.voiced_unvoiced_cost,
    }
}

/// Auto-label a 44.1 kHz buffer: preprocess, extract candidates, smooth.
///
/// Frames whose volume falls below `silence_threshold` times the recording
/// peak keep only the unvoiced candidate, forcing them unvoiced in the path.
pub fn label(buffer: &AudioBuffer, config: &TrackerConfig) -> PitchTrack {
    let spec = FrameSpec::default();
    let tensor = preprocess(buffer, &spec);
    let sample_rate = spec.sample_rate as f64;
    let global_peak = (0..tensor.frames)
        .map(|w| tensor.volume(w))
        .fold(0.0f64, f64::max);
    let candidates: Vec<Vec<PitchCandidate>> = (0..tensor.frames)
        .into_par_iter()
        .map(|w| {
            if tensor.volume(w) < config.silence_threshold * global_peak {
                vec![PitchCandidate::unvoiced(config.voicing_threshold)]
            } else {
                candidates_for_frame(tensor.autocorrelation(w), config, sample_rate)
            }
        })
        .collect();
    best_path(&candidates, &tensor.frame_times, sample_rate, config)
}
