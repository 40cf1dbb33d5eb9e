//! Tensor operations: grouped/dilated convolution, instance normalization,
//! CELU, and inference-mode batch normalization.

use rayon::prelude::*;

use super::tensor::Tensor4;
use super::ModelError;

/// Convolution parameters. The kernel is stored as
/// [out_channels, in_channels / groups, kT, kF].
#[derive(Debug, Clone)]
pub struct ConvParams {
    pub weight: Tensor4,
    pub bias: Vec<f32>,
    pub stride: (usize, usize),
    pub dilation: (usize, usize),
    pub groups: usize,
    pub padding: (usize, usize),
}

/// Inference-mode batch normalization parameters (per channel).
#[derive(Debug, Clone)]
pub struct BnParams {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
}

impl BnParams {
    /// Identity transform: gamma 1, beta 0, running mean 0, running var 1.
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

pub const BN_EPS: f32 = 1e-5;

/// 2-D cross-correlation with stride, dilation, groups and zero padding.
///
/// Output spatial dims follow the floor formula
/// `out = (in + 2*pad - dilation*(k-1) - 1) / stride + 1`.
pub fn conv2d(x: &Tensor4, p: &ConvParams) -> Result<Tensor4, ModelError> {
    let [n, c_in, t_in, f_in] = x.shape();
    let [c_out, c_in_per_group, k_t, k_f] = p.weight.shape();
    let groups = p.groups;
    if groups == 0 || c_in % groups != 0 || c_out % groups != 0 {
        return Err(ModelError::ShapeMismatch {
            expected: format!("channels divisible by groups {groups}"),
            actual: format!("in {c_in}, out {c_out}"),
        });
    }
    if c_in / groups != c_in_per_group {
        return Err(ModelError::ShapeMismatch {
            expected: format!("kernel in-channels {} ({} / {} groups)", c_in / groups, c_in, groups),
            actual: format!("kernel shape {:?}", p.weight.shape()),
        });
    }
    if p.bias.len() != c_out {
        return Err(ModelError::ShapeMismatch {
            expected: format!("{c_out} bias entries"),
            actual: format!("{}", p.bias.len()),
        });
    }
    let (s_t, s_f) = p.stride;
    let (d_t, d_f) = p.dilation;
    let (pad_t, pad_f) = p.padding;
    let span_t = d_t * (k_t - 1) + 1;
    let span_f = d_f * (k_f - 1) + 1;
    if t_in + 2 * pad_t < span_t || f_in + 2 * pad_f < span_f {
        return Err(ModelError::ShapeMismatch {
            expected: format!("input at least {span_t}x{span_f} after padding"),
            actual: format!("{t_in}x{f_in} with padding {pad_t}x{pad_f}"),
        });
    }
    let t_out = (t_in + 2 * pad_t - span_t) / s_t + 1;
    let f_out = (f_in + 2 * pad_f - span_f) / s_f + 1;
    let out_per_group = c_out / groups;

    let mut out = Tensor4::zeros(n, c_out, t_out, f_out);
    let plane_len = t_out * f_out;
    // Each (batch, out-channel) plane is independent.
    let planes: Vec<(usize, usize)> = (0..n)
        .flat_map(|b| (0..c_out).map(move |oc| (b, oc)))
        .collect();
    let results: Vec<Vec<f32>> = planes
        .par_iter()
        .map(|&(b, oc)| {
            let g = oc / out_per_group;
            let mut plane = vec![p.bias[oc]; plane_len];
            for kt in 0..k_t {
                for ot in 0..t_out {
                    let t_signed = (ot * s_t + kt * d_t) as isize - pad_t as isize;
                    if t_signed < 0 || t_signed >= t_in as isize {
                        continue;
                    }
                    let t_idx = t_signed as usize;
                    let row_out = &mut plane[ot * f_out..(ot + 1) * f_out];
                    for ic in 0..c_in_per_group {
                        let x_plane = x.plane(b, g * c_in_per_group + ic);
                        let x_row = &x_plane[t_idx * f_in..(t_idx + 1) * f_in];
                        for kf in 0..k_f {
                            let w = p.weight.get(oc, ic, kt, kf);
                            if w == 0.0 {
                                continue;
                            }
                            // f index: of*s_f + kf*d_f - pad_f must lie in [0, f_in)
                            let off = kf * d_f;
                            let mut of = 0;
                            while of < f_out && of * s_f + off < pad_f {
                                of += 1;
                            }
                            while of < f_out {
                                let fi = of * s_f + off - pad_f;
                                if fi >= f_in {
                                    break;
                                }
                                row_out[of] += w * x_row[fi];
                                of += 1;
                            }
                        }
                    }
                }
            }
            plane
        })
        .collect();
    for ((b, oc), plane) in planes.into_iter().zip(results) {
        let base = out.index(b, oc, 0, 0);
        out.data_mut()[base..base + plane_len].copy_from_slice(&plane);
    }
    Ok(out)
}

/// CELU activation with alpha = 1: x for x > 0, exp(x) - 1 otherwise.
pub fn celu(x: &mut Tensor4) {
    for v in x.data_mut() {
        if *v <= 0.0 {
            *v = v.exp_m1();
        }
    }
}

/// Inference-mode batch normalization:
/// `y = gamma * (x - mean) / sqrt(var + eps) + beta` per channel.
pub fn batch_norm(x: &mut Tensor4, bn: &BnParams) -> Result<(), ModelError> {
    let [n, c, t, f] = x.shape();
    if bn.gamma.len() != c || bn.beta.len() != c || bn.mean.len() != c || bn.var.len() != c {
        return Err(ModelError::ShapeMismatch {
            expected: format!("{c} batch-norm entries per parameter"),
            actual: format!(
                "gamma {}, beta {}, mean {}, var {}",
                bn.gamma.len(),
                bn.beta.len(),
                bn.mean.len(),
                bn.var.len()
            ),
        });
    }
    let plane = t * f;
    for b in 0..n {
        for ch in 0..c {
            let scale = bn.gamma[ch] / (bn.var[ch] + BN_EPS).sqrt();
            let shift = bn.beta[ch] - bn.mean[ch] * scale;
            let base = x.index(b, ch, 0, 0);
            for v in &mut x.data_mut()[base..base + plane] {
                *v = *v * scale + shift;
            }
        }
    }
    Ok(())
}

/// Standardize each (instance, channel) slice over its T and F axes.
///
/// Mean and the population standard deviation are accumulated in f64.
/// Constant slices (sigma = 0, detected as min == max) map to all zeros.
pub fn instance_normalize(x: &Tensor4) -> Tensor4 {
    let [n, c, t, f] = x.shape();
    let mut out = x.clone();
    let plane = t * f;
    for b in 0..n {
        for ch in 0..c {
            let src = x.plane(b, ch);
            let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
            let mut sum = 0.0f64;
            for &v in src {
                lo = lo.min(v);
                hi = hi.max(v);
                sum += v as f64;
            }
            let base = out.index(b, ch, 0, 0);
            let dst = &mut out.data_mut()[base..base + plane];
            if plane == 0 {
                continue;
            }
            if lo == hi {
                dst.fill(0.0);
                continue;
            }
            let mean = sum / plane as f64;
            let var = src
                .iter()
                .map(|&v| {
                    let d = v as f64 - mean;
                    d * d
                })
                .sum::<f64>()
                / plane as f64;
            let sigma = var.sqrt();
            let denom = if sigma == 0.0 { 1.0 } else { sigma };
            for (o, &v) in dst.iter_mut().zip(src) {
                *o = ((v as f64 - mean) / denom) as f32;
            }
        }
    }
    out
}
