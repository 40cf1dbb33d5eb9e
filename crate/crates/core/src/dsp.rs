//! Short-time analysis front end: the T×4×513 feature tensor.
//!
//! A signal is cut into 1024-sample windows at 10 ms intervals (441-sample
//! hop at 44.1 kHz, i.e. a 583-sample overlap). Each frame yields four
//! channels over 513 spectral slots:
//!
//! 0. amplitude of the FFT bins,
//! 1. phase, with the sliding-window phase advance removed so that a
//!    stationary partial keeps a constant phase across frames,
//! 2. window-corrected autocorrelation `R(w*x; k) / R(w; k)` after
//!    normalizing both by their lag-0 value,
//! 3. volume (max absolute raw sample), replicated along the axis.
//!
//! All math is f64; the on-disk `PFT1` format stores 32-bit floats.

use std::f64::consts::TAU;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::audio::AudioBuffer;

/// Number of tensor channels.
pub const CHANNELS: usize = 4;
pub const CH_AMPLITUDE: usize = 0;
pub const CH_PHASE: usize = 1;
pub const CH_AUTOCORR: usize = 2;
pub const CH_VOLUME: usize = 3;

/// Windowing geometry. Defaults to 1024-sample windows on the 10 ms grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameSpec {
    pub window_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self {
            window_len: 1024,
            hop: 441,
            sample_rate: 44_100,
        }
    }
}

impl FrameSpec {
    /// Spectral slots kept per frame (the non-redundant half plus Nyquist).
    pub fn bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    /// Frames produced for a signal of `len` samples: ceil(len / hop).
    pub fn frame_count(&self, len: usize) -> usize {
        len.div_ceil(self.hop)
    }

    fn assert_valid(&self) {
        assert!(
            self.window_len >= 2 && self.window_len.is_power_of_two(),
            "window length must be a power of two"
        );
        assert!(
            self.hop > 0 && self.hop <= self.window_len,
            "hop must be in (0, window_len]"
        );
    }
}

/// T×4×513 feature tensor, stored row-major as [frame][channel][bin].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<f64>,
    pub frame_times: Vec<f64>,
}

impl FeatureTensor {
    pub fn channel(&self, frame: usize, channel: usize) -> &[f64] {
        let start = (frame * CHANNELS + channel) * self.bins;
        &self.data[start..start + self.bins]
    }

    pub fn amplitude(&self, frame: usize) -> &[f64] {
        self.channel(frame, CH_AMPLITUDE)
    }

    pub fn phase(&self, frame: usize) -> &[f64] {
        self.channel(frame, CH_PHASE)
    }

    pub fn autocorrelation(&self, frame: usize) -> &[f64] {
        self.channel(frame, CH_AUTOCORR)
    }

    /// Volume of a frame (identical across the spectral axis).
    pub fn volume(&self, frame: usize) -> f64 {
        self.channel(frame, CH_VOLUME)[0]
    }
}

/// Periodic Hann window: w[n] = 0.5 * (1 - cos(2*pi*n / len)).
pub fn hann_window(len: usize) -> Vec<f64> {
    assert!(len >= 2, "window length must be at least 2");
    (0..len)
        .map(|n| 0.5 * (1.0 - (TAU * n as f64 / len as f64).cos()))
        .collect()
}

/// Extract the frame centered at sample `frame_index * hop`.
///
/// The window covers [center - len/2, center + len/2); samples outside the
/// signal are zero.
pub fn frame_at(samples: &[f64], spec: &FrameSpec, frame_index: usize) -> Vec<f64> {
    let len = spec.window_len;
    let center = (frame_index * spec.hop) as isize;
    let start = center - (len / 2) as isize;
    let mut out = vec![0.0; len];
    let lo = start.max(0);
    let hi = (start + len as isize).min(samples.len() as isize);
    if lo < hi {
        let dst = (lo - start) as usize;
        out[dst..dst + (hi - lo) as usize].copy_from_slice(&samples[lo as usize..hi as usize]);
    }
    out
}

/// Cut a signal into centered windows plus their timestamps in seconds.
pub fn frame_signal(buffer: &AudioBuffer, spec: &FrameSpec) -> (Vec<Vec<f64>>, Vec<f64>) {
    spec.assert_valid();
    let t = spec.frame_count(buffer.samples.len());
    let frames = (0..t)
        .map(|w| frame_at(&buffer.samples, spec, w))
        .collect();
    let times = (0..t)
        .map(|w| (w * spec.hop) as f64 / spec.sample_rate as f64)
        .collect();
    (frames, times)
}

/// Map an angle into [0, 2*pi). Guards against rounding landing on 2*pi.
fn wrap_tau(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

struct SpectrumPlan {
    fft: Arc<dyn Fft<f64>>,
    len: usize,
}

impl SpectrumPlan {
    fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            fft: planner.plan_fft_forward(len),
            len,
        }
    }

    fn compute(&self, window: &[f64]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(window.len(), self.len);
        let mut buf: Vec<Complex<f64>> = window.iter().map(|&s| Complex::new(s, 0.0)).collect();
        self.fft.process(&mut buf);
        let bins = self.len / 2 + 1;
        let mut amp = Vec::with_capacity(bins);
        let mut phase = Vec::with_capacity(bins);
        for c in buf.iter().take(bins) {
            amp.push(c.norm());
            phase.push(if c.re == 0.0 && c.im == 0.0 {
                0.0
            } else {
                wrap_tau(c.im.atan2(c.re))
            });
        }
        (amp, phase)
    }
}

/// FFT amplitude and phase of one window, truncated to len/2 + 1 bins.
///
/// Phases are mapped into [0, 2*pi); the angle of a zero bin is 0.
pub fn spectrum(window: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert!(
        window.len().is_power_of_two(),
        "window length must be a power of two"
    );
    SpectrumPlan::new(window.len()).compute(window)
}

/// Remove the sliding-window phase advance from one frame's phases.
///
/// Bin k of frame w is rotated back by 2*pi*w*hop*k / len; bins 0 and len/2
/// pass through unchanged. The rotation is reduced modulo the window length
/// in integer arithmetic, so whole turns cancel exactly.
pub fn phase_correct(phase: &[f64], frame_index: usize, spec: &FrameSpec) -> Vec<f64> {
    let len = spec.window_len as u64;
    let mut out = Vec::with_capacity(phase.len());
    for (k, &p) in phase.iter().enumerate() {
        if k == 0 || k == spec.window_len / 2 {
            out.push(p);
            continue;
        }
        let turns = (frame_index as u64 * spec.hop as u64 % len) * k as u64 % len;
        let correction = TAU * turns as f64 / len as f64;
        out.push(wrap_tau(p - correction));
    }
    out
}

struct AutocorrPlan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    padded: usize,
    lags: usize,
}

impl AutocorrPlan {
    fn new(window_len: usize) -> Self {
        let padded = 2 * window_len;
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(padded),
            inverse: planner.plan_fft_inverse(padded),
            padded,
            lags: window_len / 2 + 1,
        }
    }

    /// Raw autocorrelation R(a; k) = sum_n a[n] a[n+k] for k < lags,
    /// computed by zero-padded FFT.
    fn autocorrelation(&self, a: &[f64]) -> Vec<f64> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.padded];
        for (slot, &s) in buf.iter_mut().zip(a.iter()) {
            slot.re = s;
        }
        self.forward.process(&mut buf);
        for c in buf.iter_mut() {
            *c = Complex::new(c.norm_sqr(), 0.0);
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.padded as f64;
        buf.iter().take(self.lags).map(|c| c.re * scale).collect()
    }
}

/// Lag-0-normalized window autocorrelation, used as the correction term.
fn normalized_window_autocorr(plan: &AutocorrPlan, hann: &[f64]) -> Vec<f64> {
    let mut r = plan.autocorrelation(hann);
    let r0 = r[0];
    for v in r.iter_mut() {
        *v /= r0;
    }
    r
}

fn corrected_autocorr_with(
    plan: &AutocorrPlan,
    raw_window: &[f64],
    hann: &[f64],
    window_ac: &[f64],
) -> Vec<f64> {
    let windowed: Vec<f64> = raw_window.iter().zip(hann).map(|(&s, &w)| s * w).collect();
    let r = plan.autocorrelation(&windowed);
    if r[0] <= 0.0 {
        // Silent frame convention: an all-zero row, lag 0 included.
        return vec![0.0; plan.lags];
    }
    let r0 = r[0];
    r.iter()
        .zip(window_ac)
        .map(|(&rx, &rw)| if rw < 1e-12 { 0.0 } else { (rx / r0) / rw })
        .collect()
}

/// Window-corrected autocorrelation over len/2 + 1 lags.
///
/// Both the windowed-signal and window autocorrelations are normalized by
/// their lag-0 value before the ratio, so the result is 1 at lag 0 for any
/// non-silent frame. Lags where the normalized window autocorrelation falls
/// below 1e-12 are zeroed; an all-zero frame yields an all-zero row.
pub fn corrected_autocorrelation(raw_window: &[f64], hann: &[f64]) -> Vec<f64> {
    assert_eq!(raw_window.len(), hann.len());
    let plan = AutocorrPlan::new(raw_window.len());
    let window_ac = normalized_window_autocorr(&plan, hann);
    corrected_autocorr_with(&plan, raw_window, hann, &window_ac)
}

/// Volume of a frame: the maximal absolute raw sample value.
pub fn volume(raw_window: &[f64]) -> f64 {
    raw_window.iter().fold(0.0, |m, &s| m.max(s.abs()))
}

/// Run the full front end: frame, window, transform, correct, stack.
///
/// Deterministic; frames are processed independently in parallel.
pub fn preprocess(buffer: &AudioBuffer, spec: &FrameSpec) -> FeatureTensor {
    spec.assert_valid();
    assert_eq!(
        buffer.sample_rate, spec.sample_rate,
        "buffer rate {} does not match spec rate {}",
        buffer.sample_rate, spec.sample_rate
    );
    let t = spec.frame_count(buffer.samples.len());
    let bins = spec.bins();
    let hann = hann_window(spec.window_len);
    let spectrum_plan = SpectrumPlan::new(spec.window_len);
    let ac_plan = AutocorrPlan::new(spec.window_len);
    let window_ac = normalized_window_autocorr(&ac_plan, &hann);

    let rows: Vec<Vec<f64>> = (0..t)
        .into_par_iter()
        .map(|w| {
            let raw = frame_at(&buffer.samples, spec, w);
            let windowed: Vec<f64> = raw.iter().zip(&hann).map(|(&s, &h)| s * h).collect();
            let (amp, phase) = spectrum_plan.compute(&windowed);
            let phase = phase_correct(&phase, w, spec);
            let ac = corrected_autocorr_with(&ac_plan, &raw, &hann, &window_ac);
            let vol = volume(&raw);
            let mut row = Vec::with_capacity(CHANNELS * bins);
            row.extend_from_slice(&amp);
            row.extend_from_slice(&phase);
            row.extend_from_slice(&ac);
            row.extend(std::iter::repeat(vol).take(bins));
            row
        })
        .collect();

    let mut data = Vec::with_capacity(t * CHANNELS * bins);
    for row in rows {
        data.extend_from_slice(&row);
    }
    let frame_times = (0..t)
        .map(|w| (w * spec.hop) as f64 / spec.sample_rate as f64)
        .collect();
    FeatureTensor {
        frames: t,
        bins,
        data,
        frame_times,
    }
}

#[derive(Debug, Error)]
pub enum Pft1Error {
    #[error("malformed PFT1 file: {0}")]
    Malformed(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Write a feature tensor in the `PFT1` format: magic bytes, little-endian
/// u32 dims (T, 4, bins), then T*4*bins little-endian f32 values in
/// [frame][channel][bin] order.
pub fn write_pft1(tensor: &FeatureTensor, path: impl AsRef<Path>) -> Result<(), Pft1Error> {
    let mut out = Vec::with_capacity(16 + tensor.data.len() * 4);
    out.extend_from_slice(b"PFT1");
    out.extend_from_slice(&(tensor.frames as u32).to_le_bytes());
    out.extend_from_slice(&(CHANNELS as u32).to_le_bytes());
    out.extend_from_slice(&(tensor.bins as u32).to_le_bytes());
    for &v in &tensor.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

/// Read a `PFT1` file. Frame times are reconstructed on the 10 ms grid.
pub fn read_pft1(path: impl AsRef<Path>) -> Result<FeatureTensor, Pft1Error> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 || &bytes[..4] != b"PFT1" {
        return Err(Pft1Error::Malformed("missing PFT1 magic".into()));
    }
    let dim = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (frames, channels, bins) = (dim(4), dim(8), dim(12));
    if channels != CHANNELS {
        return Err(Pft1Error::Malformed(format!(
            "expected {CHANNELS} channels, file declares {channels}"
        )));
    }
    let count = frames * channels * bins;
    if bytes.len() != 16 + count * 4 {
        return Err(Pft1Error::Malformed(format!(
            "expected {} payload bytes, found {}",
            count * 4,
            bytes.len() - 16
        )));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let frame_times = (0..frames).map(|w| w as f64 * 0.01).collect();
    Ok(FeatureTensor {
        frames,
        bins,
        data,
        frame_times,
    })
}
