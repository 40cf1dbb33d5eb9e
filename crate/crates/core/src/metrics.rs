//! Evaluation: 50-cent accuracy and cent-error statistics over voiced frames.
//!
//! Errors are measured in cents (hundredths of a semitone) between two
//! tracks on the same 10 ms grid, restricted to frames where the truth is
//! voiced. An unvoiced prediction on a voiced frame scores at face value —
//! 100 * truth MIDI cents from the silence sentinel — keeping it inside the
//! accuracy denominator; set [`EvalOptions::drop_unvoiced_pred`] to exclude
//! those frames instead. The delayed variant additionally compares each
//! prediction against the truth shifted by up to ±1 frame (±10 ms) and
//! keeps the nearest voiced label.

use thiserror::Error;

use crate::labeler::PitchTrack;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("track length mismatch: prediction has {pred} frames, truth has {truth}")]
    LengthMismatch { pred: usize, truth: usize },
}

/// Scoring options.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions {
    /// Drop voiced-truth frames where the prediction is unvoiced instead of
    /// scoring them against the silence sentinel.
    pub drop_unvoiced_pred: bool,
}

/// Aggregate error report over the voiced frames of a track pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Percent of voiced frames with error at most 50 cents.
    pub accuracy_50c: f64,
    pub err_mean: f64,
    pub err_p25: f64,
    pub err_median: f64,
    pub err_p75: f64,
    pub err_p99: f64,
    pub voiced_frame_count: usize,
}

impl EvalReport {
    /// Aligned text table with one row of figures.
    pub fn table(&self) -> String {
        format!(
            "{:>8} {:>10} {:>9} {:>11} {:>9} {:>9} {:>8}\n{:>8.2} {:>10.2} {:>9.2} {:>11.2} {:>9.2} {:>9.2} {:>8}\n",
            "Acc.",
            "Err. Mean",
            "Err. 25th",
            "Err. Median",
            "Err. 75th",
            "Err. 99th",
            "Frames",
            self.accuracy_50c,
            self.err_mean,
            self.err_p25,
            self.err_median,
            self.err_p75,
            self.err_p99,
            self.voiced_frame_count,
        )
    }

    /// Machine-readable `key=value` lines.
    pub fn key_values(&self) -> String {
        format!(
            "accuracy_50c={}\nerr_mean={}\nerr_p25={}\nerr_median={}\nerr_p75={}\nerr_p99={}\nvoiced_frame_count={}\n",
            self.accuracy_50c,
            self.err_mean,
            self.err_p25,
            self.err_median,
            self.err_p75,
            self.err_p99,
            self.voiced_frame_count,
        )
    }
}

fn check_lengths(pred: &PitchTrack, truth: &PitchTrack) -> Result<(), EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    Ok(())
}

/// Per-frame absolute errors in cents over voiced-truth frames.
pub fn frame_errors(pred: &PitchTrack, truth: &PitchTrack) -> Result<Vec<f64>, EvalError> {
    frame_errors_opts(pred, truth, EvalOptions::default())
}

pub fn frame_errors_opts(
    pred: &PitchTrack,
    truth: &PitchTrack,
    options: EvalOptions,
) -> Result<Vec<f64>, EvalError> {
    check_lengths(pred, truth)?;
    let mut errors = Vec::new();
    for (p, t) in pred.midi.iter().zip(&truth.midi) {
        if *t == 0.0 {
            continue;
        }
        if *p == 0.0 && options.drop_unvoiced_pred {
            continue;
        }
        errors.push(100.0 * (p - t).abs());
    }
    Ok(errors)
}

/// Percentile by linear interpolation between order statistics:
/// rank = q/100 * (n - 1), value interpolated between the bracketing
/// sorted elements.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let rank = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn report_from_errors(mut errors: Vec<f64>) -> Option<EvalReport> {
    if errors.is_empty() {
        return None;
    }
    let n = errors.len();
    let within = errors.iter().filter(|&&e| e <= 50.0).count();
    let mean = errors.iter().sum::<f64>() / n as f64;
    errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(EvalReport {
        accuracy_50c: 100.0 * within as f64 / n as f64,
        err_mean: mean,
        err_p25: percentile(&errors, 25.0),
        err_median: percentile(&errors, 50.0),
        err_p75: percentile(&errors, 75.0),
        err_p99: percentile(&errors, 99.0),
        voiced_frame_count: n,
    })
}

/// Evaluate a prediction against the truth on the same grid.
///
/// Returns `Ok(None)` when the truth has no voiced frames to score.
pub fn evaluate(pred: &PitchTrack, truth: &PitchTrack) -> Result<Option<EvalReport>, EvalError> {
    evaluate_opts(pred, truth, EvalOptions::default())
}

pub fn evaluate_opts(
    pred: &PitchTrack,
    truth: &PitchTrack,
    options: EvalOptions,
) -> Result<Option<EvalReport>, EvalError> {
    Ok(report_from_errors(frame_errors_opts(pred, truth, options)?))
}

/// Evaluate with temporal tolerance of `shift_frames` * 10 ms.
///
/// For each voiced-truth frame the error is the minimum over the truth at
/// offsets within ±shift_frames, restricted to voiced in-range neighbors.
/// `shift_frames = 0` reduces to [`evaluate`].
pub fn evaluate_delayed(
    pred: &PitchTrack,
    truth: &PitchTrack,
    shift_frames: usize,
) -> Result<Option<EvalReport>, EvalError> {
    evaluate_delayed_opts(pred, truth, shift_frames, EvalOptions::default())
}

pub fn evaluate_delayed_opts(
    pred: &PitchTrack,
    truth: &PitchTrack,
    shift_frames: usize,
    options: EvalOptions,
) -> Result<Option<EvalReport>, EvalError> {
    check_lengths(pred, truth)?;
    let n = truth.len();
    let shift = shift_frames as isize;
    let mut errors = Vec::new();
    for t in 0..n as isize {
        if truth.midi[t as usize] == 0.0 {
            continue;
        }
        let p = pred.midi[t as usize];
        if p == 0.0 && options.drop_unvoiced_pred {
            continue;
        }
        let mut best = f64::INFINITY;
        for s in -shift..=shift {
            let at = t + s;
            if at < 0 || at >= n as isize {
                continue;
            }
            let label = truth.midi[at as usize];
            if label == 0.0 {
                continue;
            }
            best = best.min(100.0 * (p - label).abs());
        }
        errors.push(best);
    }
    Ok(report_from_errors(errors))
}
