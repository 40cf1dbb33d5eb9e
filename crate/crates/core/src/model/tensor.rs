//! Dense 4-D tensor in [batch, channel, time, freq] layout.

use crate::dsp::{FeatureTensor, CHANNELS};

use super::ModelError;

/// Row-major [N, C, T, F] tensor of f32 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    n: usize,
    c: usize,
    t: usize,
    f: usize,
    data: Vec<f32>,
}

impl Tensor4 {
    pub fn zeros(n: usize, c: usize, t: usize, f: usize) -> Self {
        Self {
            n,
            c,
            t,
            f,
            data: vec![0.0; n * c * t * f],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f32>) -> Result<Self, ModelError> {
        let [n, c, t, f] = shape;
        if data.len() != n * c * t * f {
            return Err(ModelError::ShapeMismatch {
                expected: format!("{} values for shape {shape:?}", n * c * t * f),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Self { n, c, t, f, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.t, self.f]
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, t: usize, f: usize) -> usize {
        ((n * self.c + c) * self.t + t) * self.f + f
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, t: usize, f: usize) -> f32 {
        self.data[self.index(n, c, t, f)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, t: usize, f: usize, v: f32) {
        let at = self.index(n, c, t, f);
        self.data[at] = v;
    }

    /// Contiguous [t][f] plane of one (batch, channel) slice.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let start = (n * self.c + c) * self.t * self.f;
        &self.data[start..start + self.t * self.f]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Stack feature tensors into a [N, 4, T, bins] batch, transposing the
    /// per-frame [channel][bin] rows into channels-first layout.
    pub fn from_features(features: &[&FeatureTensor]) -> Result<Self, ModelError> {
        if features.is_empty() {
            return Err(ModelError::ShapeMismatch {
                expected: "at least one feature tensor".into(),
                actual: "empty batch".into(),
            });
        }
        let t = features[0].frames;
        let f = features[0].bins;
        for (i, feat) in features.iter().enumerate() {
            if feat.frames != t || feat.bins != f {
                return Err(ModelError::ShapeMismatch {
                    expected: format!("frames {t} x bins {f} (batch item 0)"),
                    actual: format!("frames {} x bins {} (batch item {i})", feat.frames, feat.bins),
                });
            }
        }
        let mut out = Tensor4::zeros(features.len(), CHANNELS, t, f);
        for (n, feat) in features.iter().enumerate() {
            for w in 0..t {
                for c in 0..CHANNELS {
                    let row = feat.channel(w, c);
                    let base = out.index(n, c, w, 0);
                    for (k, &v) in row.iter().enumerate() {
                        out.data[base + k] = v as f32;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Per-frame log-probabilities over the 128 MIDI classes: [N, T, 128].
#[derive(Debug, Clone, PartialEq)]
pub struct PitchLogits {
    pub batch: usize,
    pub frames: usize,
    data: Vec<f32>,
}

impl PitchLogits {
    pub const CLASSES: usize = 128;

    pub fn new(batch: usize, frames: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), batch * frames * Self::CLASSES);
        Self {
            batch,
            frames,
            data,
        }
    }

    /// Log-probability row for one frame.
    pub fn frame(&self, n: usize, t: usize) -> &[f32] {
        let start = (n * self.frames + t) * Self::CLASSES;
        &self.data[start..start + Self::CLASSES]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}
