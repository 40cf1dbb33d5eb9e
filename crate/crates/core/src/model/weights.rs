//! Named tensor collection and the `PNW1` binary weight format.
//!
//! File layout: magic `PNW1`, little-endian u32 tensor count, then per
//! tensor a u16 name length, the UTF-8 name, a u8 rank, rank little-endian
//! u32 dims, and the row-major little-endian f32 values. Tensors are
//! written in lexicographic name order so saves are byte-reproducible.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LayerKind, ModelConfig, ModelError};

/// One named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorData {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorData {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Self {
        assert_eq!(dims.iter().product::<usize>(), data.len());
        Self { dims, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Map from parameter name to tensor.
///
/// Names follow `layer<idx>.<param>` with params `conv.weight`, `conv.bias`,
/// `bn.gamma`, `bn.beta`, `bn.mean`, `bn.var`, `fc.weight`, `fc.bias`;
/// the two convolutions of a dilation block carry `.a` / `.b` sub-indices
/// (e.g. `layer2.a.conv.weight`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    tensors: BTreeMap<String, TensorData>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: TensorData) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&TensorData> {
        self.tensors.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Fetch a tensor, checking its exact shape.
    pub fn require(&self, name: &str, dims: &[usize]) -> Result<&TensorData, ModelError> {
        let tensor = self
            .get(name)
            .ok_or_else(|| ModelError::MissingTensor(name.to_string()))?;
        if tensor.dims != dims {
            return Err(ModelError::ShapeMismatch {
                expected: format!("{name} with dims {dims:?}"),
                actual: format!("dims {:?}", tensor.dims),
            });
        }
        Ok(tensor)
    }

    /// Serialize in `PNW1` format.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let mut out = Vec::new();
        out.extend_from_slice(b"PNW1");
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, tensor) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(tensor.dims.len() as u8);
            for &d in &tensor.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &tensor.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = fs::File::create(path).map_err(ModelError::Io)?;
        f.write_all(&out).map_err(ModelError::Io)?;
        Ok(())
    }

    /// Parse a `PNW1` file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let bytes = fs::read(path).map_err(ModelError::Io)?;
        let bad = |reason: &str| ModelError::MalformedWeights(reason.to_string());
        if bytes.len() < 8 || &bytes[..4] != b"PNW1" {
            return Err(bad("missing PNW1 magic"));
        }
        let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let mut pos = 8;
        let mut store = WeightStore::new();
        for _ in 0..count {
            let need = |pos: usize, n: usize| -> Result<(), ModelError> {
                if pos + n > bytes.len() {
                    Err(bad("truncated tensor record"))
                } else {
                    Ok(())
                }
            };
            need(pos, 2)?;
            let name_len = u16::from_le_bytes(bytes[pos..pos + 2].try_into().unwrap()) as usize;
            pos += 2;
            need(pos, name_len)?;
            let name = std::str::from_utf8(&bytes[pos..pos + name_len])
                .map_err(|_| bad("tensor name is not UTF-8"))?
                .to_string();
            pos += name_len;
            need(pos, 1)?;
            let ndim = bytes[pos] as usize;
            pos += 1;
            need(pos, 4 * ndim)?;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize);
                pos += 4;
            }
            let count: usize = dims.iter().product();
            need(pos, 4 * count)?;
            let data = bytes[pos..pos + 4 * count]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            pos += 4 * count;
            store.insert(name, TensorData { dims, data });
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes after final tensor"));
        }
        Ok(store)
    }
}

/// Generate a complete, well-shaped random weight set for a config.
///
/// Conv and FC weights are uniform in a fan-in-scaled range; batch-norm
/// gamma/var draw near 1, beta/mean near 0. Intended for smoke tests and
/// shape verification, not for meaningful predictions.
pub fn random_weights(config: &ModelConfig, seed: u64) -> WeightStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = WeightStore::new();
    for (idx, layer) in config.layers.iter().enumerate() {
        match layer.kind {
            LayerKind::Bottleneck | LayerKind::Conv => {
                push_conv_bn(
                    &mut store,
                    &mut rng,
                    &format!("layer{idx}"),
                    layer.in_channels,
                    layer.out_channels,
                    layer.kernel,
                    layer.groups,
                    matches!(layer.kind, LayerKind::Bottleneck),
                );
            }
            LayerKind::DilationRes => {
                for sub in ["a", "b"] {
                    push_conv_bn(
                        &mut store,
                        &mut rng,
                        &format!("layer{idx}.{sub}"),
                        layer.in_channels,
                        layer.out_channels,
                        layer.kernel,
                        layer.groups,
                        true,
                    );
                }
            }
            LayerKind::FullyConnected => {
                let (fan_in, fan_out) = (layer.in_channels, layer.out_channels);
                let bound = (1.0 / fan_in as f32).sqrt();
                let weight: Vec<f32> = (0..fan_out * fan_in)
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect();
                let bias: Vec<f32> = (0..fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
                store.insert(
                    format!("layer{idx}.fc.weight"),
                    TensorData::new(vec![fan_out, fan_in], weight),
                );
                store.insert(
                    format!("layer{idx}.fc.bias"),
                    TensorData::new(vec![fan_out], bias),
                );
            }
        }
    }
    store
}

#[allow(clippy::too_many_arguments)]
fn push_conv_bn(
    store: &mut WeightStore,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    in_channels: usize,
    out_channels: usize,
    kernel: (usize, usize),
    groups: usize,
    with_bn: bool,
) {
    let in_per_group = in_channels / groups;
    let fan_in = in_per_group * kernel.0 * kernel.1;
    let bound = (1.0 / fan_in as f32).sqrt();
    let count = out_channels * in_per_group * kernel.0 * kernel.1;
    let weight: Vec<f32> = (0..count).map(|_| rng.gen_range(-bound..bound)).collect();
    store.insert(
        format!("{prefix}.conv.weight"),
        TensorData::new(vec![out_channels, in_per_group, kernel.0, kernel.1], weight),
    );
    let bias: Vec<f32> = (0..out_channels).map(|_| rng.gen_range(-bound..bound)).collect();
    store.insert(
        format!("{prefix}.conv.bias"),
        TensorData::new(vec![out_channels], bias),
    );
    if with_bn {
        let gamma: Vec<f32> = (0..out_channels).map(|_| rng.gen_range(0.8f32..1.2)).collect();
        let beta: Vec<f32> = (0..out_channels).map(|_| rng.gen_range(-0.1f32..0.1)).collect();
        let mean: Vec<f32> = (0..out_channels).map(|_| rng.gen_range(-0.1f32..0.1)).collect();
        let var: Vec<f32> = (0..out_channels).map(|_| rng.gen_range(0.8f32..1.2)).collect();
        store.insert(format!("{prefix}.bn.gamma"), TensorData::new(vec![out_channels], gamma));
        store.insert(format!("{prefix}.bn.beta"), TensorData::new(vec![out_channels], beta));
        store.insert(format!("{prefix}.bn.mean"), TensorData::new(vec![out_channels], mean));
        store.insert(format!("{prefix}.bn.var"), TensorData::new(vec![out_channels], var));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pnw1_roundtrip_is_exact() {
        let config = ModelConfig::standard();
        let store = random_weights(&config, 11);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.pnw1");
        store.save(&path).unwrap();
        let back = WeightStore::load(&path).unwrap();
        assert_eq!(store, back);
    }

    #[test]
    fn saves_are_byte_identical() {
        let config = ModelConfig::standard();
        let store = random_weights(&config, 3);
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a"), dir.path().join("b"));
        store.save(&p1).unwrap();
        store.save(&p2).unwrap();
        assert_eq!(fs::read(p1).unwrap(), fs::read(p2).unwrap());
    }

    #[test]
    fn require_reports_missing_name() {
        let store = WeightStore::new();
        match store.require("layer0.conv.weight", &[1]) {
            Err(ModelError::MissingTensor(name)) => assert_eq!(name, "layer0.conv.weight"),
            other => panic!("expected missing tensor, got {other:?}"),
        }
    }

    #[test]
    fn require_checks_shape() {
        let mut store = WeightStore::new();
        store.insert("t", TensorData::new(vec![2, 2], vec![0.0; 4]));
        assert!(store.require("t", &[2, 2]).is_ok());
        assert!(matches!(
            store.require("t", &[4]),
            Err(ModelError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn load_rejects_truncated_file() {
        let config = ModelConfig::standard();
        let store = random_weights(&config, 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.pnw1");
        store.save(&path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(
            WeightStore::load(&path),
            Err(ModelError::MalformedWeights(_))
        ));
    }
}
