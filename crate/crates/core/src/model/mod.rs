//! Forward-only convolutional inference engine.
//!
//! The network ingests the [N, T, 4, 513] feature layout (stored internally
//! channels-first as [N, 4, T, 513]), standardizes each instance/channel
//! slice, and runs a stack of strided bottleneck blocks that halve the
//! spectral axis interleaved with dilated residual blocks that mix along
//! time. A final unpadded 1×5 convolution, a per-frame fully connected
//! layer, CELU, and LogSoftmax produce [N, T, 128] log-probabilities over
//! MIDI numbers.
//!
//! Blocks are conv → CELU(alpha=1) → BatchNorm (inference mode, running
//! statistics from the weight file). Strided convs use same-style symmetric
//! padding ((k-1)/2); dilated convs use padding equal to their dilation so
//! the residual sum type-checks.

mod ops;
mod tensor;
mod weights;

pub use ops::{batch_norm, celu, conv2d, instance_normalize, BnParams, ConvParams, BN_EPS};
pub use tensor::{PitchLogits, Tensor4};
pub use weights::{random_weights, TensorData, WeightStore};

use thiserror::Error;

use crate::codec::PitchVector;
use crate::dsp::FeatureTensor;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("missing weight tensor '{0}'")]
    MissingTensor(String),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("malformed weight file: {0}")]
    MalformedWeights(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Bottleneck,
    DilationRes,
    Conv,
    FullyConnected,
}

/// One layer of the stack.
///
/// For `FullyConnected`, `in_channels` is the flattened per-frame input
/// width (channels × remaining spectral slots) and `kernel`/`stride`/
/// `groups` are unused.
#[derive(Debug, Clone)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub groups: usize,
    /// Dilation rates of the two convolutions in a dilation block.
    pub dilations: (usize, usize),
}

impl LayerSpec {
    pub fn bottleneck(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        groups: usize,
    ) -> Self {
        Self {
            kind: LayerKind::Bottleneck,
            in_channels,
            out_channels,
            kernel,
            stride: (1, 2),
            groups,
            dilations: (1, 1),
        }
    }

    pub fn dilation_res(channels: usize, groups: usize) -> Self {
        Self {
            kind: LayerKind::DilationRes,
            in_channels: channels,
            out_channels: channels,
            kernel: (3, 3),
            stride: (1, 1),
            groups,
            dilations: (3, 2),
        }
    }

    pub fn conv(in_channels: usize, out_channels: usize, kernel: (usize, usize)) -> Self {
        Self {
            kind: LayerKind::Conv,
            in_channels,
            out_channels,
            kernel,
            stride: (1, 1),
            groups: 1,
            dilations: (1, 1),
        }
    }

    pub fn fully_connected(in_width: usize, out_width: usize) -> Self {
        Self {
            kind: LayerKind::FullyConnected,
            in_channels: in_width,
            out_channels: out_width,
            kernel: (0, 0),
            stride: (0, 0),
            groups: 1,
            dilations: (1, 1),
        }
    }
}

/// Ordered layer stack.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub layers: Vec<LayerSpec>,
}

impl ModelConfig {
    /// The full pitch-estimation stack: six spectral bottlenecks
    /// (513 → 257 → 129 → 65 → 33 → 17 → 9), three dilated residual
    /// stages, an unpadded 1×5 convolution (9 → 5), and a per-frame
    /// 640 → 128 fully connected head.
    pub fn standard() -> Self {
        Self {
            layers: vec![
                LayerSpec::bottleneck(4, 128, (7, 7), 1),
                LayerSpec::bottleneck(128, 64, (3, 3), 2),
                LayerSpec::dilation_res(64, 4),
                LayerSpec::bottleneck(64, 64, (3, 3), 4),
                LayerSpec::dilation_res(64, 4),
                LayerSpec::bottleneck(64, 128, (3, 3), 4),
                LayerSpec::dilation_res(128, 4),
                LayerSpec::bottleneck(128, 128, (1, 3), 1),
                LayerSpec::bottleneck(128, 128, (1, 3), 1),
                LayerSpec::conv(128, 128, (1, 5)),
                LayerSpec::fully_connected(640, 128),
            ],
        }
    }

    /// Check channel chaining and group divisibility through the stack.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut channels: Option<usize> = None;
        for (idx, layer) in self.layers.iter().enumerate() {
            if layer.kind != LayerKind::FullyConnected {
                if layer.in_channels % layer.groups != 0
                    || layer.out_channels % layer.groups != 0
                {
                    return Err(ModelError::ShapeMismatch {
                        expected: format!("layer{idx} channels divisible by {}", layer.groups),
                        actual: format!("{} -> {}", layer.in_channels, layer.out_channels),
                    });
                }
                if let Some(prev) = channels {
                    if prev != layer.in_channels {
                        return Err(ModelError::ShapeMismatch {
                            expected: format!("layer{idx} input channels {prev}"),
                            actual: format!("{}", layer.in_channels),
                        });
                    }
                }
                channels = Some(layer.out_channels);
            }
        }
        Ok(())
    }
}

/// Parameters of one bottleneck stage: conv → CELU → BN.
#[derive(Debug, Clone)]
pub struct BottleneckParams {
    pub conv: ConvParams,
    pub bn: BnParams,
}

/// Parameters of one dilated residual stage (two conv → CELU → BN passes
/// plus the skip connection).
#[derive(Debug, Clone)]
pub struct DilationResParams {
    pub a: BottleneckParams,
    pub b: BottleneckParams,
}

/// Strided bottleneck: conv(stride (1,2), same-style padding) → CELU → BN.
/// The spectral axis maps F → floor((F + 2p - k) / 2) + 1; T is unchanged.
pub fn bottleneck_block(x: &Tensor4, params: &BottleneckParams) -> Result<Tensor4, ModelError> {
    let mut y = conv2d(x, &params.conv)?;
    celu(&mut y);
    batch_norm(&mut y, &params.bn)?;
    Ok(y)
}

/// Dilated residual stage. Padding equals dilation, so the output shape
/// matches the input exactly and the skip sum is well-formed.
pub fn dilation_res_block(x: &Tensor4, params: &DilationResParams) -> Result<Tensor4, ModelError> {
    let mut y = conv2d(x, &params.a.conv)?;
    celu(&mut y);
    batch_norm(&mut y, &params.a.bn)?;
    let mut z = conv2d(&y, &params.b.conv)?;
    celu(&mut z);
    batch_norm(&mut z, &params.b.bn)?;
    if z.shape() != x.shape() {
        return Err(ModelError::ShapeMismatch {
            expected: format!("residual output {:?}", x.shape()),
            actual: format!("{:?}", z.shape()),
        });
    }
    for (o, &i) in z.data_mut().iter_mut().zip(x.data()) {
        *o += i;
    }
    Ok(z)
}

enum LayerParams {
    Bottleneck(BottleneckParams),
    DilationRes(DilationResParams),
    Conv(ConvParams),
    Fc {
        weight: Vec<f32>,
        bias: Vec<f32>,
        in_width: usize,
        out_width: usize,
    },
}

/// Weight-resolved model ready for inference. Read-only after load; safe
/// to share across threads.
pub struct Model {
    layers: Vec<LayerParams>,
}

fn conv_params_from_store(
    store: &WeightStore,
    prefix: &str,
    layer: &LayerSpec,
    kernel: (usize, usize),
    stride: (usize, usize),
    dilation: usize,
    padding: (usize, usize),
) -> Result<ConvParams, ModelError> {
    let in_per_group = layer.in_channels / layer.groups;
    let weight = store.require(
        &format!("{prefix}.conv.weight"),
        &[layer.out_channels, in_per_group, kernel.0, kernel.1],
    )?;
    let bias = store.require(&format!("{prefix}.conv.bias"), &[layer.out_channels])?;
    Ok(ConvParams {
        weight: Tensor4::from_vec(
            [layer.out_channels, in_per_group, kernel.0, kernel.1],
            weight.data.clone(),
        )?,
        bias: bias.data.clone(),
        stride,
        dilation: (dilation, dilation),
        groups: layer.groups,
        padding,
    })
}

fn bn_params_from_store(store: &WeightStore, prefix: &str, channels: usize) -> Result<BnParams, ModelError> {
    Ok(BnParams {
        gamma: store.require(&format!("{prefix}.bn.gamma"), &[channels])?.data.clone(),
        beta: store.require(&format!("{prefix}.bn.beta"), &[channels])?.data.clone(),
        mean: store.require(&format!("{prefix}.bn.mean"), &[channels])?.data.clone(),
        var: store.require(&format!("{prefix}.bn.var"), &[channels])?.data.clone(),
    })
}

impl Model {
    /// Resolve every parameter the config demands, validating shapes.
    pub fn load(config: &ModelConfig, store: &WeightStore) -> Result<Self, ModelError> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.layers.len());
        for (idx, layer) in config.layers.iter().enumerate() {
            let prefix = format!("layer{idx}");
            // Strided bottlenecks use same-style symmetric padding, dilated
            // convs pad by their dilation, and the final conv is unpadded.
            let params = match layer.kind {
                LayerKind::Bottleneck => LayerParams::Bottleneck(BottleneckParams {
                    conv: conv_params_from_store(
                        store,
                        &prefix,
                        layer,
                        layer.kernel,
                        layer.stride,
                        1,
                        ((layer.kernel.0 - 1) / 2, (layer.kernel.1 - 1) / 2),
                    )?,
                    bn: bn_params_from_store(store, &prefix, layer.out_channels)?,
                }),
                LayerKind::DilationRes => {
                    let (d_a, d_b) = layer.dilations;
                    LayerParams::DilationRes(DilationResParams {
                        a: BottleneckParams {
                            conv: conv_params_from_store(
                                store,
                                &format!("{prefix}.a"),
                                layer,
                                layer.kernel,
                                (1, 1),
                                d_a,
                                (d_a, d_a),
                            )?,
                            bn: bn_params_from_store(store, &format!("{prefix}.a"), layer.out_channels)?,
                        },
                        b: BottleneckParams {
                            conv: conv_params_from_store(
                                store,
                                &format!("{prefix}.b"),
                                layer,
                                layer.kernel,
                                (1, 1),
                                d_b,
                                (d_b, d_b),
                            )?,
                            bn: bn_params_from_store(store, &format!("{prefix}.b"), layer.out_channels)?,
                        },
                    })
                }
                LayerKind::Conv => LayerParams::Conv(conv_params_from_store(
                    store,
                    &prefix,
                    layer,
                    layer.kernel,
                    (1, 1),
                    1,
                    (0, 0),
                )?),
                LayerKind::FullyConnected => {
                    let weight = store.require(
                        &format!("{prefix}.fc.weight"),
                        &[layer.out_channels, layer.in_channels],
                    )?;
                    let bias = store.require(&format!("{prefix}.fc.bias"), &[layer.out_channels])?;
                    LayerParams::Fc {
                        weight: weight.data.clone(),
                        bias: bias.data.clone(),
                        in_width: layer.in_channels,
                        out_width: layer.out_channels,
                    }
                }
            };
            layers.push(params);
        }
        Ok(Self { layers })
    }

    /// Forward pass over a channels-first [N, 4, T, 513] tensor.
    ///
    /// Output frames are flattened channel-major (index = c * F + f) before
    /// the fully connected head.
    pub fn forward(&self, x: &Tensor4) -> Result<PitchLogits, ModelError> {
        let mut h = instance_normalize(x);
        let mut fc: Option<(&[f32], &[f32], usize, usize)> = None;
        for params in &self.layers {
            match params {
                LayerParams::Bottleneck(p) => h = bottleneck_block(&h, p)?,
                LayerParams::DilationRes(p) => h = dilation_res_block(&h, p)?,
                LayerParams::Conv(p) => h = conv2d(&h, p)?,
                LayerParams::Fc {
                    weight,
                    bias,
                    in_width,
                    out_width,
                } => {
                    fc = Some((weight, bias, *in_width, *out_width));
                }
            }
        }
        let (fc_weight, fc_bias, in_width, out_width) = fc.ok_or_else(|| ModelError::ShapeMismatch {
            expected: "a fully connected output layer".into(),
            actual: "none in config".into(),
        })?;
        let [n, c, t, f] = h.shape();
        if c * f != in_width {
            return Err(ModelError::ShapeMismatch {
                expected: format!("flattened frame width {in_width} at the FC layer"),
                actual: format!("{c} channels x {f} slots = {}", c * f),
            });
        }
        if out_width != PitchLogits::CLASSES {
            return Err(ModelError::ShapeMismatch {
                expected: format!("{} output classes", PitchLogits::CLASSES),
                actual: format!("{out_width}"),
            });
        }
        let mut data = vec![0.0f32; n * t * out_width];
        for b in 0..n {
            for frame in 0..t {
                // Flatten the frame channel-major.
                let mut input = vec![0.0f32; in_width];
                for ch in 0..c {
                    let plane = h.plane(b, ch);
                    let row = &plane[frame * f..(frame + 1) * f];
                    input[ch * f..(ch + 1) * f].copy_from_slice(row);
                }
                let out_base = (b * t + frame) * out_width;
                let frame_out = &mut data[out_base..out_base + out_width];
                for (o, slot) in frame_out.iter_mut().enumerate() {
                    let row = &fc_weight[o * in_width..(o + 1) * in_width];
                    let mut acc = fc_bias[o];
                    for (w, v) in row.iter().zip(&input) {
                        acc += w * v;
                    }
                    // CELU before the log-softmax.
                    *slot = if acc > 0.0 { acc } else { acc.exp_m1() };
                }
                log_softmax_in_place(frame_out);
            }
        }
        Ok(PitchLogits::new(n, t, data))
    }

    /// Forward pass over a batch of feature tensors (equal frame counts).
    pub fn forward_features(&self, features: &[&FeatureTensor]) -> Result<PitchLogits, ModelError> {
        let x = Tensor4::from_features(features)?;
        self.forward(&x)
    }

    /// Run the convolutional stack recording the spectral width after the
    /// input and each width-changing layer (bottlenecks and plain convs).
    /// Diagnostic companion to [`Model::forward`].
    pub fn spectral_chain(&self, x: &Tensor4) -> Result<Vec<usize>, ModelError> {
        let mut h = instance_normalize(x);
        let mut widths = vec![h.shape()[3]];
        for params in &self.layers {
            match params {
                LayerParams::Bottleneck(p) => {
                    h = bottleneck_block(&h, p)?;
                    widths.push(h.shape()[3]);
                }
                LayerParams::DilationRes(p) => {
                    h = dilation_res_block(&h, p)?;
                }
                LayerParams::Conv(p) => {
                    h = conv2d(&h, p)?;
                    widths.push(h.shape()[3]);
                }
                LayerParams::Fc { .. } => {}
            }
        }
        Ok(widths)
    }
}

fn log_softmax_in_place(row: &mut [f32]) {
    let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
    let sum: f64 = row.iter().map(|&v| (v as f64 - max).exp()).sum();
    let lse = max + sum.ln();
    for v in row {
        *v = (*v as f64 - lse) as f32;
    }
}

/// Masked KL divergence between target pitch vectors and predicted
/// log-probabilities.
///
/// Only frames whose target carries mass (non-silent labels) contribute:
/// `D = sum_i y_i * (log y_i - log yhat_i)` with `0 * log 0 = 0`, averaged
/// over voiced frames. An all-silent batch scores 0.
pub fn kl_loss(targets: &[PitchVector], logits: &PitchLogits) -> Result<f64, ModelError> {
    let frames = logits.batch * logits.frames;
    if targets.len() != frames {
        return Err(ModelError::ShapeMismatch {
            expected: format!("{frames} target vectors"),
            actual: format!("{}", targets.len()),
        });
    }
    let mut total = 0.0f64;
    let mut voiced = 0usize;
    for (idx, target) in targets.iter().enumerate() {
        if target.is_silence() {
            continue;
        }
        voiced += 1;
        let n = idx / logits.frames;
        let t = idx % logits.frames;
        let row = logits.frame(n, t);
        for (i, &y) in target.0.iter().enumerate() {
            if y > 0.0 {
                total += y * (y.ln() - row[i] as f64);
            }
        }
    }
    if voiced == 0 {
        Ok(0.0)
    } else {
        Ok(total / voiced as f64)
    }
}

/// Per-layer breakdown of trainable parameter counts.
#[derive(Debug, Clone)]
pub struct ParamTable {
    pub rows: Vec<(String, usize)>,
    pub total: usize,
}

impl std::fmt::Display for ParamTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<24} {:>10}", "layer", "parameters")?;
        for (name, count) in &self.rows {
            writeln!(f, "{name:<24} {count:>10}")?;
        }
        writeln!(f, "{:<24} {:>10}", "total", self.total)
    }
}

/// Count trainable parameters (conv kernels and biases, batch-norm gamma
/// and beta, FC entries; running statistics excluded), checking every
/// tensor against the config's expected shape.
pub fn count_parameters(config: &ModelConfig, store: &WeightStore) -> Result<ParamTable, ModelError> {
    let mut rows = Vec::new();
    let mut total = 0usize;
    let conv_count = |store: &WeightStore, prefix: &str, layer: &LayerSpec, with_bn: bool| -> Result<usize, ModelError> {
        let in_per_group = layer.in_channels / layer.groups;
        let weight = store.require(
            &format!("{prefix}.conv.weight"),
            &[layer.out_channels, in_per_group, layer.kernel.0, layer.kernel.1],
        )?;
        let bias = store.require(&format!("{prefix}.conv.bias"), &[layer.out_channels])?;
        let mut count = weight.len() + bias.len();
        if with_bn {
            count += store.require(&format!("{prefix}.bn.gamma"), &[layer.out_channels])?.len();
            count += store.require(&format!("{prefix}.bn.beta"), &[layer.out_channels])?.len();
        }
        Ok(count)
    };
    for (idx, layer) in config.layers.iter().enumerate() {
        let prefix = format!("layer{idx}");
        let count = match layer.kind {
            LayerKind::Bottleneck => conv_count(store, &prefix, layer, true)?,
            LayerKind::Conv => conv_count(store, &prefix, layer, false)?,
            LayerKind::DilationRes => {
                conv_count(store, &format!("{prefix}.a"), layer, true)?
                    + conv_count(store, &format!("{prefix}.b"), layer, true)?
            }
            LayerKind::FullyConnected => {
                let weight = store.require(
                    &format!("{prefix}.fc.weight"),
                    &[layer.out_channels, layer.in_channels],
                )?;
                let bias = store.require(&format!("{prefix}.fc.bias"), &[layer.out_channels])?;
                weight.len() + bias.len()
            }
        };
        rows.push((format!("{prefix} ({:?})", layer.kind), count));
        total += count;
    }
    Ok(ParamTable { rows, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::encode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor4 {
        let count = shape.iter().product();
        let data = (0..count).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        Tensor4::from_vec(shape, data).unwrap()
    }

    fn zero_bottleneck(channels_in: usize, channels_out: usize, kernel: (usize, usize), groups: usize, dilation: usize) -> BottleneckParams {
        let in_per_group = channels_in / groups;
        BottleneckParams {
            conv: ConvParams {
                weight: Tensor4::zeros(channels_out, in_per_group, kernel.0, kernel.1),
                bias: vec![0.0; channels_out],
                stride: (1, 1),
                dilation: (dilation, dilation),
                groups,
                padding: (dilation * (kernel.0 - 1) / 2, dilation * (kernel.1 - 1) / 2),
            },
            bn: BnParams::identity(channels_out),
        }
    }

    #[test]
    fn bottleneck_halves_spectral_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor(&mut rng, [1, 4, 10, 513]);
        let config = ModelConfig::standard();
        let store = random_weights(&config, 1);
        let model = Model::load(&config, &store).unwrap();
        let LayerParams::Bottleneck(p0) = &model.layers[0] else {
            panic!()
        };
        let y = bottleneck_block(&x, p0).unwrap();
        assert_eq!(y.shape(), [1, 128, 10, 257]);
    }

    #[test]
    fn spectral_chain_through_all_bottlenecks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let config = ModelConfig::standard();
        let store = random_weights(&config, 2);
        let model = Model::load(&config, &store).unwrap();
        let mut h = random_tensor(&mut rng, [1, 4, 6, 513]);
        let mut spectral = vec![h.shape()[3]];
        for params in &model.layers {
            match params {
                LayerParams::Bottleneck(p) => {
                    h = bottleneck_block(&h, p).unwrap();
                    spectral.push(h.shape()[3]);
                }
                LayerParams::DilationRes(p) => {
                    let before = h.shape();
                    h = dilation_res_block(&h, p).unwrap();
                    assert_eq!(h.shape(), before, "dilation block changed shape");
                }
                LayerParams::Conv(p) => {
                    h = conv2d(&h, p).unwrap();
                    spectral.push(h.shape()[3]);
                }
                LayerParams::Fc { .. } => {}
            }
            assert_eq!(h.shape()[2], 6, "temporal axis changed");
        }
        assert_eq!(spectral, vec![513, 257, 129, 65, 33, 17, 9, 5]);
    }

    #[test]
    fn dilation_res_with_zero_convs_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_tensor(&mut rng, [1, 8, 9, 12]);
        let params = DilationResParams {
            a: zero_bottleneck(8, 8, (3, 3), 4, 3),
            b: zero_bottleneck(8, 8, (3, 3), 4, 2),
        };
        let y = dilation_res_block(&x, &params).unwrap();
        // Zero conv output, CELU(0) = 0, identity BN: the residual passes x.
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn dilation_res_matches_composed_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_tensor(&mut rng, [1, 4, 8, 9]);
        let config = ModelConfig {
            layers: vec![LayerSpec::dilation_res(4, 2)],
        };
        let store = random_weights(&config, 9);
        let model = Model::load(&config, &store).unwrap();
        let LayerParams::DilationRes(p) = &model.layers[0] else {
            panic!()
        };
        let fast = dilation_res_block(&x, p).unwrap();
        // Reference composition through the public ops.
        let mut a = ops::tests::conv2d_reference(&x, &p.a.conv);
        celu(&mut a);
        batch_norm(&mut a, &p.a.bn).unwrap();
        let mut b = ops::tests::conv2d_reference(&a, &p.b.conv);
        celu(&mut b);
        batch_norm(&mut b, &p.b.bn).unwrap();
        for (i, (f, r)) in fast.data().iter().zip(b.data().iter().zip(x.data())).enumerate() {
            let (r_val, x_val) = r;
            assert!((f - (r_val + x_val)).abs() < 1e-5, "index {i}");
        }
    }

    #[test]
    fn forward_produces_frame_distributions() {
        let config = ModelConfig::standard();
        let store = random_weights(&config, 5);
        let model = Model::load(&config, &store).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_tensor(&mut rng, [1, 4, 12, 513]);
        let logits = model.forward(&x).unwrap();
        assert_eq!(logits.batch, 1);
        assert_eq!(logits.frames, 12);
        for t in 0..12 {
            let row = logits.frame(0, t);
            let mass: f64 = row.iter().map(|&v| (v as f64).exp()).sum();
            assert!((mass - 1.0).abs() < 1e-5, "frame {t} mass {mass}");
        }
    }

    #[test]
    fn forward_batch_matches_per_item() {
        let config = ModelConfig::standard();
        let store = random_weights(&config, 7);
        let model = Model::load(&config, &store).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_tensor(&mut rng, [1, 4, 5, 513]);
        let b = random_tensor(&mut rng, [1, 4, 5, 513]);
        let mut stacked = Tensor4::zeros(2, 4, 5, 513);
        let half = a.data().len();
        stacked.data_mut()[..half].copy_from_slice(a.data());
        stacked.data_mut()[half..].copy_from_slice(b.data());
        let out_a = model.forward(&a).unwrap();
        let out_b = model.forward(&b).unwrap();
        let out_stacked = model.forward(&stacked).unwrap();
        for t in 0..5 {
            for i in 0..128 {
                assert!((out_stacked.frame(0, t)[i] - out_a.frame(0, t)[i]).abs() < 1e-5);
                assert!((out_stacked.frame(1, t)[i] - out_b.frame(0, t)[i]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn forward_reports_missing_tensor() {
        let config = ModelConfig::standard();
        let store = random_weights(&config, 9);
        let mut pruned = WeightStore::new();
        for name in store.names() {
            if name != "layer3.bn.gamma" {
                pruned.insert(name.to_string(), store.get(name).unwrap().clone());
            }
        }
        match Model::load(&config, &pruned) {
            Err(ModelError::MissingTensor(name)) => assert_eq!(name, "layer3.bn.gamma"),
            other => panic!("expected missing tensor, got {:?}", other.err()),
        }
    }

    #[test]
    fn forward_rejects_wrong_spectral_width() {
        let config = ModelConfig::standard();
        let store = random_weights(&config, 10);
        let model = Model::load(&config, &store).unwrap();
        let x = Tensor4::zeros(1, 4, 4, 257);
        match model.forward(&x) {
            Err(ModelError::ShapeMismatch { expected, .. }) => {
                assert!(expected.contains("640"), "{expected}");
            }
            other => panic!("expected shape mismatch, got {:?}", other.err()),
        }
    }

    #[test]
    fn kl_loss_closed_forms() {
        // One-hot target, prediction exactly matching: loss 0.
        let mut data = vec![f32::NEG_INFINITY; 128];
        data[60] = 0.0; // log 1
        let logits = PitchLogits::new(1, 1, data);
        let target = encode(60.0).unwrap();
        let loss = kl_loss(&[target.clone()], &logits).unwrap();
        assert!(loss.abs() < 1e-9, "loss {loss}");

        // Uniform prediction vs one-hot: log 128.
        let uniform = vec![-(128f64.ln()) as f32; 128];
        let logits = PitchLogits::new(1, 1, uniform);
        let loss = kl_loss(&[target], &logits).unwrap();
        assert!((loss - 128f64.ln()).abs() < 1e-6, "loss {loss}");
    }

    #[test]
    fn kl_loss_masks_silence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<f32> = (0..2 * 128).map(|_| rng.gen_range(-9.0f32..0.0)).collect();
        let logits = PitchLogits::new(1, 2, data);
        let silent = vec![PitchVector::silence(), PitchVector::silence()];
        assert_eq!(kl_loss(&silent, &logits).unwrap(), 0.0);
    }

    #[test]
    fn kl_loss_nonnegative_and_zero_only_on_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let mut row = vec![0.0f32; 128];
            // Random log-probabilities via log-softmax of noise.
            for v in row.iter_mut() {
                *v = rng.gen_range(-3.0..3.0);
            }
            super::log_softmax_in_place(&mut row);
            let logits = PitchLogits::new(1, 1, row);
            let target = encode(rng.gen_range(1.0..127.0)).unwrap();
            let loss = kl_loss(&[target], &logits).unwrap();
            assert!(loss >= -1e-12, "negative loss {loss}");
        }
    }

    #[test]
    fn kl_loss_shape_mismatch() {
        let logits = PitchLogits::new(1, 2, vec![0.0; 256]);
        assert!(matches!(
            kl_loss(&[PitchVector::silence()], &logits),
            Err(ModelError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn parameter_count_fixtures() {
        // Single 1x1 conv, 4 -> 4 channels, groups 1, with bias: 20 params.
        let config = ModelConfig {
            layers: vec![LayerSpec::conv(4, 4, (1, 1))],
        };
        let store = random_weights(&config, 13);
        let table = count_parameters(&config, &store).unwrap();
        assert_eq!(table.total, 20);

        // First-stage conv (4 -> 128, 7x7, groups 1): 25216 including bias.
        let config = ModelConfig {
            layers: vec![LayerSpec::conv(4, 128, (7, 7))],
        };
        let store = random_weights(&config, 14);
        let table = count_parameters(&config, &store).unwrap();
        assert_eq!(table.total, 25_216);
    }

    #[test]
    fn full_stack_parameter_total_in_expected_band() {
        let config = ModelConfig::standard();
        let store = random_weights(&config, 15);
        let table = count_parameters(&config, &store).unwrap();
        assert!(
            (300_000..=2_000_000).contains(&table.total),
            "total {}",
            table.total
        );
        assert_eq!(table.rows.len(), config.layers.len());
        let rendered = table.to_string();
        assert!(rendered.contains("total"));
    }

    #[test]
    fn translation_covariance_in_the_interior() {
        // Cyclic shift along T preserves instance statistics exactly, so
        // interior output rows (beyond the temporal receptive-field halo,
        // 21 frames for the standard stack) must shift correspondingly.
        let config = ModelConfig::standard();
        let store = random_weights(&config, 16);
        let model = Model::load(&config, &store).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let t_len = 56;
        let x = random_tensor(&mut rng, [1, 4, t_len, 513]);
        let mut shifted = Tensor4::zeros(1, 4, t_len, 513);
        for c in 0..4 {
            for t in 0..t_len {
                let src = ((t + t_len - 1) % t_len, t);
                for f in 0..513 {
                    let v = x.get(0, c, src.0, f);
                    shifted.set(0, c, src.1, f, v);
                }
            }
        }
        let base = model.forward(&x).unwrap();
        let moved = model.forward(&shifted).unwrap();
        let halo = 21;
        for t in (halo + 1)..(t_len - halo) {
            for i in 0..128 {
                let a = base.frame(0, t - 1)[i];
                let b = moved.frame(0, t)[i];
                assert!(
                    (a - b).abs() < 1e-4,
                    "frame {t} class {i}: {a} vs {b}"
                );
            }
        }
    }
}
