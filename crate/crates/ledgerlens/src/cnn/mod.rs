//! A small convolutional network over 24×24×3 inputs, written out as plain
//! loops in 64-bit arithmetic.
//!
//! Everything is sequential and seeded: the forward pass, the analytic
//! backward pass, and initialization are bit-reproducible across runs, which
//! the training determinism contract and the finite-difference gradient
//! checks rely on.

pub mod train;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Rgb, IMAGE_SIDE};

/// Probability clip applied inside the cross-entropy loss.
pub const BCE_EPSILON: f64 = 1e-7;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Dense row-major value container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::contract(format!(
                "tensor data length {} does not match shape {shape:?}",
                data.len()
            )));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Channels-first normalized tensor (3, 24, 24) from a pixel grid.
pub fn image_tensor(pixels: &[[Rgb; IMAGE_SIDE]; IMAGE_SIDE]) -> Tensor {
    let mut data = vec![0.0; 3 * IMAGE_SIDE * IMAGE_SIDE];
    for (r, row) in pixels.iter().enumerate() {
        for (c, px) in row.iter().enumerate() {
            for (ch, &byte) in px.iter().enumerate() {
                data[ch * IMAGE_SIDE * IMAGE_SIDE + r * IMAGE_SIDE + c] = f64::from(byte) / 255.0;
            }
        }
    }
    Tensor { shape: vec![3, IMAGE_SIDE, IMAGE_SIDE], data }
}

/// Square-kernel convolution, stride 1, no padding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `[out_c][in_c][kh][kw]` row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `[out][in]` row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Conv(Conv2d),
    Relu,
    MaxPool2,
    Flatten,
    Dense(Dense),
}

/// Training hyperparameters; every field has the shipped default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 30,
            patience: 5,
            seed: 7,
        }
    }
}

/// The network: an ordered layer stack ending in a single sigmoid output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnModel {
    pub format_version: u32,
    pub input_shape: [usize; 3],
    pub config: TrainConfig,
    pub layers: Vec<Layer>,
}

fn he_uniform(rng: &mut ChaCha8Rng, fan_in: usize, count: usize) -> Vec<f64> {
    let limit = (6.0 / fan_in as f64).sqrt();
    (0..count).map(|_| rng.gen_range(-limit..limit)).collect()
}

impl CnnModel {
    /// The default stack: conv 3×3×16 → relu → pool → conv 3×3×32 → relu →
    /// pool → flatten → dense 64 → relu → dense 1.
    pub fn standard(config: TrainConfig) -> Self {
        Self::build(
            config,
            [3, IMAGE_SIDE, IMAGE_SIDE],
            &[
                LayerSpec::Conv { out_channels: 16, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2,
                LayerSpec::Conv { out_channels: 32, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2,
                LayerSpec::Flatten,
                LayerSpec::Dense { out_dim: 64 },
                LayerSpec::Relu,
                LayerSpec::Dense { out_dim: 1 },
            ],
        )
        .expect("standard architecture chains")
    }

    /// Reduced stack for gradient checking: conv 3×3×2 → relu → pool →
    /// flatten → dense 4 → relu → dense 1.
    pub fn tiny(config: TrainConfig) -> Self {
        Self::build(
            config,
            [3, IMAGE_SIDE, IMAGE_SIDE],
            &[
                LayerSpec::Conv { out_channels: 2, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2,
                LayerSpec::Flatten,
                LayerSpec::Dense { out_dim: 4 },
                LayerSpec::Relu,
                LayerSpec::Dense { out_dim: 1 },
            ],
        )
        .expect("tiny architecture chains")
    }

    /// Build a seeded model from layer specs, validating the shape chain.
    pub fn build(config: TrainConfig, input_shape: [usize; 3], specs: &[LayerSpec]) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut shape: Vec<usize> = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            match *spec {
                LayerSpec::Conv { out_channels, kernel } => {
                    let [c, h, w] = shape3(&shape)?;
                    if h < kernel || w < kernel {
                        return Err(Error::contract(format!(
                            "kernel {kernel} larger than input {h}x{w}"
                        )));
                    }
                    let fan_in = c * kernel * kernel;
                    layers.push(Layer::Conv(Conv2d {
                        in_channels: c,
                        out_channels,
                        kernel,
                        weights: he_uniform(&mut rng, fan_in, out_channels * fan_in),
                        bias: vec![0.0; out_channels],
                    }));
                    shape = vec![out_channels, h - kernel + 1, w - kernel + 1];
                }
                LayerSpec::Relu => layers.push(Layer::Relu),
                LayerSpec::MaxPool2 => {
                    let [c, h, w] = shape3(&shape)?;
                    if h < 2 || w < 2 {
                        return Err(Error::contract("input too small to pool".to_string()));
                    }
                    layers.push(Layer::MaxPool2);
                    shape = vec![c, h / 2, w / 2];
                }
                LayerSpec::Flatten => {
                    layers.push(Layer::Flatten);
                    shape = vec![shape.iter().product()];
                }
                LayerSpec::Dense { out_dim } => {
                    if shape.len() != 1 {
                        return Err(Error::contract("dense layer needs flattened input".to_string()));
                    }
                    let in_dim = shape[0];
                    layers.push(Layer::Dense(Dense {
                        in_dim,
                        out_dim,
                        weights: he_uniform(&mut rng, in_dim, out_dim * in_dim),
                        bias: vec![0.0; out_dim],
                    }));
                    shape = vec![out_dim];
                }
            }
        }
        if shape != [1] {
            return Err(Error::contract(format!(
                "network must end in a single output, ends in {shape:?}"
            )));
        }
        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            input_shape,
            config,
            layers,
        })
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape() != self.input_shape {
            return Err(Error::contract(format!(
                "input shape {:?} does not match model input {:?}",
                input.shape(),
                self.input_shape
            )));
        }
        Ok(())
    }

    /// Probability for a single input.
    pub fn forward_one(&self, input: &Tensor) -> Result<f64> {
        self.check_input(input)?;
        let (prob, _) = self.forward_cached(input);
        Ok(prob)
    }

    /// Probabilities for a batch, in order.
    pub fn forward_batch(&self, inputs: &[Tensor]) -> Result<Vec<f64>> {
        inputs.iter().map(|t| self.forward_one(t)).collect()
    }

    fn forward_cached(&self, input: &Tensor) -> (f64, Vec<LayerCache>) {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut activation = input.clone();
        for layer in &self.layers {
            let (next, cache) = layer.forward(&activation);
            caches.push(cache);
            activation = next;
        }
        let logit = activation.data()[0];
        (sigmoid(logit), caches)
    }

    /// Mean loss and its analytic gradients for a batch.
    pub fn backward_batch(&self, inputs: &[Tensor], labels: &[u8]) -> Result<(Gradients, f64, Vec<f64>)> {
        if inputs.is_empty() || inputs.len() != labels.len() {
            return Err(Error::contract(format!(
                "batch of {} inputs with {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        let n = inputs.len() as f64;
        let mut grads = Gradients::zeros_like(self);
        let mut probs = Vec::with_capacity(inputs.len());
        for (input, &label) in inputs.iter().zip(labels) {
            self.check_input(input)?;
            let (prob, caches) = self.forward_cached(input);
            probs.push(prob);
            // d(mean BCE)/d(logit); zero where the probability clip is active.
            let clipped = !(BCE_EPSILON..=1.0 - BCE_EPSILON).contains(&prob);
            let dlogit = if clipped { 0.0 } else { (prob - f64::from(label)) / n };
            let mut upstream = Tensor::from_vec(&[1], vec![dlogit]).expect("scalar");
            for ((layer, cache), grad) in self
                .layers
                .iter()
                .zip(&caches)
                .zip(&mut grads.layers)
                .rev()
            {
                upstream = layer.backward(cache, &upstream, grad);
            }
        }
        let loss = bce_loss(&probs, labels);
        Ok((grads, loss, probs))
    }

    /// All parameters flattened in layer order, weights before bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.extend_from_slice(&c.weights);
                    out.extend_from_slice(&c.bias);
                }
                Layer::Dense(d) => {
                    out.extend_from_slice(&d.weights);
                    out.extend_from_slice(&d.bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => c.weights.len() + c.bias.len(),
                Layer::Dense(d) => d.weights.len() + d.bias.len(),
                _ => 0,
            })
            .sum()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::contract(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut i = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&params[i..i + dst.len()]);
            i += dst.len();
        };
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => {
                    take(&mut c.weights);
                    take(&mut c.bias);
                }
                Layer::Dense(d) => {
                    take(&mut d.weights);
                    take(&mut d.bias);
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::data(path.display().to_string(), e.to_string()))?;
        let model: CnnModel = serde_json::from_str(&text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::data(
                path.display().to_string(),
                format!(
                    "model format {} unsupported, expected {MODEL_FORMAT_VERSION}",
                    model.format_version
                ),
            ));
        }
        Ok(model)
    }
}

/// Architecture description consumed by [`CnnModel::build`].
#[derive(Debug, Clone, Copy)]
pub enum LayerSpec {
    Conv { out_channels: usize, kernel: usize },
    Relu,
    MaxPool2,
    Flatten,
    Dense { out_dim: usize },
}

fn shape3(shape: &[usize]) -> Result<[usize; 3]> {
    match shape {
        [c, h, w] => Ok([*c, *h, *w]),
        other => Err(Error::contract(format!("expected 3-d activation, got {other:?}"))),
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy with probabilities clipped to
/// `[BCE_EPSILON, 1 − BCE_EPSILON]`.
pub fn bce_loss(probs: &[f64], labels: &[u8]) -> f64 {
    assert_eq!(probs.len(), labels.len());
    assert!(!probs.is_empty());
    let mut total = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
        total -= if y == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    total / probs.len() as f64
}

/// Per-layer parameter gradients, aligned with the model's layer order.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone, Default)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &CnnModel) -> Self {
        let layers = model
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => LayerGrad {
                    weights: vec![0.0; c.weights.len()],
                    bias: vec![0.0; c.bias.len()],
                },
                Layer::Dense(d) => LayerGrad {
                    weights: vec![0.0; d.weights.len()],
                    bias: vec![0.0; d.bias.len()],
                },
                _ => LayerGrad::default(),
            })
            .collect();
        Self { layers }
    }

    /// Flattened in the same order as [`CnnModel::params`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }
}

/// Values cached by a forward pass for the matching backward pass.
enum LayerCache {
    Conv { input: Tensor },
    Relu { mask: Vec<bool> },
    MaxPool2 { input_shape: Vec<usize>, argmax: Vec<usize> },
    Flatten { input_shape: Vec<usize> },
    Dense { input: Tensor },
}

impl Layer {
    fn forward(&self, input: &Tensor) -> (Tensor, LayerCache) {
        match self {
            Layer::Conv(conv) => {
                let [c, h, w] = shape3(input.shape()).expect("conv input 3-d");
                debug_assert_eq!(c, conv.in_channels);
                let k = conv.kernel;
                let (oh, ow) = (h - k + 1, w - k + 1);
                let mut out = Tensor::zeros(&[conv.out_channels, oh, ow]);
                let x = input.data();
                let o = out.data_mut();
                for oc in 0..conv.out_channels {
                    for y in 0..oh {
                        for xcol in 0..ow {
                            let mut acc = conv.bias[oc];
                            for ic in 0..conv.in_channels {
                                for ky in 0..k {
                                    let in_row = (ic * h + y + ky) * w + xcol;
                                    let w_row = ((oc * conv.in_channels + ic) * k + ky) * k;
                                    for kx in 0..k {
                                        acc += x[in_row + kx] * conv.weights[w_row + kx];
                                    }
                                }
                            }
                            o[(oc * oh + y) * ow + xcol] = acc;
                        }
                    }
                }
                (out, LayerCache::Conv { input: input.clone() })
            }
            Layer::Relu => {
                let mask: Vec<bool> = input.data().iter().map(|&v| v > 0.0).collect();
                let mut out = input.clone();
                for v in out.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                (out, LayerCache::Relu { mask })
            }
            Layer::MaxPool2 => {
                let [c, h, w] = shape3(input.shape()).expect("pool input 3-d");
                let (oh, ow) = (h / 2, w / 2);
                let mut out = Tensor::zeros(&[c, oh, ow]);
                let mut argmax = vec![0usize; c * oh * ow];
                let x = input.data();
                let o = out.data_mut();
                for ch in 0..c {
                    for y in 0..oh {
                        for xcol in 0..ow {
                            let mut best = f64::NEG_INFINITY;
                            let mut best_idx = 0;
                            for ky in 0..2 {
                                for kx in 0..2 {
                                    let idx = (ch * h + 2 * y + ky) * w + 2 * xcol + kx;
                                    if x[idx] > best {
                                        best = x[idx];
                                        best_idx = idx;
                                    }
                                }
                            }
                            let oidx = (ch * oh + y) * ow + xcol;
                            o[oidx] = best;
                            argmax[oidx] = best_idx;
                        }
                    }
                }
                (out, LayerCache::MaxPool2 { input_shape: input.shape().to_vec(), argmax })
            }
            Layer::Flatten => {
                let out = Tensor::from_vec(&[input.data().len()], input.data().to_vec())
                    .expect("flatten length");
                (out, LayerCache::Flatten { input_shape: input.shape().to_vec() })
            }
            Layer::Dense(dense) => {
                debug_assert_eq!(input.data().len(), dense.in_dim);
                let x = input.data();
                let mut out = Tensor::zeros(&[dense.out_dim]);
                let o = out.data_mut();
                for (row, slot) in o.iter_mut().enumerate() {
                    let w = &dense.weights[row * dense.in_dim..(row + 1) * dense.in_dim];
                    let mut acc = dense.bias[row];
                    for (xi, wi) in x.iter().zip(w) {
                        acc += xi * wi;
                    }
                    *slot = acc;
                }
                (out, LayerCache::Dense { input: input.clone() })
            }
        }
    }

    /// Propagate `upstream` through this layer, accumulating parameter
    /// gradients into `grad` and returning the gradient w.r.t. the input.
    fn backward(&self, cache: &LayerCache, upstream: &Tensor, grad: &mut LayerGrad) -> Tensor {
        match (self, cache) {
            (Layer::Conv(conv), LayerCache::Conv { input }) => {
                let [_, h, w] = shape3(input.shape()).expect("conv input 3-d");
                let k = conv.kernel;
                let (oh, ow) = (h - k + 1, w - k + 1);
                let x = input.data();
                let up = upstream.data();
                let mut dx = Tensor::zeros(input.shape());
                let dxd = dx.data_mut();
                for oc in 0..conv.out_channels {
                    for y in 0..oh {
                        for xcol in 0..ow {
                            let g = up[(oc * oh + y) * ow + xcol];
                            if g == 0.0 {
                                continue;
                            }
                            grad.bias[oc] += g;
                            for ic in 0..conv.in_channels {
                                for ky in 0..k {
                                    let in_row = (ic * h + y + ky) * w + xcol;
                                    let w_row = ((oc * conv.in_channels + ic) * k + ky) * k;
                                    for kx in 0..k {
                                        grad.weights[w_row + kx] += g * x[in_row + kx];
                                        dxd[in_row + kx] += g * conv.weights[w_row + kx];
                                    }
                                }
                            }
                        }
                    }
                }
                dx
            }
            (Layer::Relu, LayerCache::Relu { mask }) => {
                let mut dx = upstream.clone();
                for (v, &keep) in dx.data_mut().iter_mut().zip(mask) {
                    if !keep {
                        *v = 0.0;
                    }
                }
                dx
            }
            (Layer::MaxPool2, LayerCache::MaxPool2 { input_shape, argmax }) => {
                let mut dx = Tensor::zeros(input_shape);
                let dxd = dx.data_mut();
                for (&src, &g) in argmax.iter().zip(upstream.data()) {
                    dxd[src] += g;
                }
                dx
            }
            (Layer::Flatten, LayerCache::Flatten { input_shape }) => {
                Tensor::from_vec(input_shape, upstream.data().to_vec()).expect("flatten shapes")
            }
            (Layer::Dense(dense), LayerCache::Dense { input }) => {
                let x = input.data();
                let up = upstream.data();
                let mut dx = Tensor::zeros(&[dense.in_dim]);
                let dxd = dx.data_mut();
                for (row, &g) in up.iter().enumerate() {
                    grad.bias[row] += g;
                    let w_row = row * dense.in_dim;
                    for i in 0..dense.in_dim {
                        grad.weights[w_row + i] += g * x[i];
                        dxd[i] += g * dense.weights[w_row + i];
                    }
                }
                dx
            }
            _ => unreachable!("cache kind matches layer kind"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn random_inputs(n: usize, seed: u64) -> Vec<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let data: Vec<f64> = (0..3 * IMAGE_SIDE * IMAGE_SIDE)
                    .map(|_| rng.gen_range(0.0..1.0))
                    .collect();
                Tensor::from_vec(&[3, IMAGE_SIDE, IMAGE_SIDE], data).unwrap()
            })
            .collect()
    }

    #[test]
    fn outputs_are_probabilities() {
        let model = CnnModel::standard(TrainConfig::default());
        for input in random_inputs(4, 3) {
            let p = model.forward_one(&input).unwrap();
            assert!(p > 0.0 && p < 1.0, "probability {p}");
        }
    }

    #[test]
    fn duplicate_batch_entries_get_identical_probabilities() {
        let model = CnnModel::standard(TrainConfig::default());
        let input = &random_inputs(1, 9)[0];
        let probs = model.forward_batch(&[input.clone(), input.clone()]).unwrap();
        assert_eq!(probs[0], probs[1]);
    }

    #[test]
    fn zero_model_outputs_one_half() {
        let mut model = CnnModel::tiny(TrainConfig::default());
        let zeros = vec![0.0; model.param_count()];
        model.set_params(&zeros).unwrap();
        let input = Tensor::zeros(&[3, IMAGE_SIDE, IMAGE_SIDE]);
        assert_eq!(model.forward_one(&input).unwrap(), 0.5);
    }

    #[test]
    fn shape_mismatch_is_a_contract_error() {
        let model = CnnModel::standard(TrainConfig::default());
        let bad = Tensor::zeros(&[3, 10, 10]);
        assert!(matches!(model.forward_one(&bad), Err(Error::Contract(_))));
    }

    #[test]
    fn bce_analytic_values() {
        // Perfect prediction after clipping.
        let loss = bce_loss(&[1.0, 0.0], &[1, 0]);
        assert!(loss <= 1.2e-7, "loss {loss}");
        // Coin-flip prediction.
        let loss = bce_loss(&[0.5, 0.5, 0.5], &[1, 0, 1]);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        // Hand-computed mixed batch.
        let loss = bce_loss(&[0.9, 0.2], &[1, 0]);
        let expected = -(0.9f64.ln() + 0.8f64.ln()) / 2.0;
        assert!((loss - expected).abs() < 1e-12);
        assert!((loss - 0.1643).abs() < 5e-5);
    }

    #[test]
    fn params_round_trip() {
        let model = CnnModel::standard(TrainConfig::default());
        let params = model.params();
        assert_eq!(params.len(), model.param_count());
        let mut other = CnnModel::standard(TrainConfig { seed: 99, ..Default::default() });
        assert_ne!(other.params(), params);
        other.set_params(&params).unwrap();
        assert_eq!(other.params(), params);
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = CnnModel::tiny(TrainConfig::default());
        model.save(&path).unwrap();
        let back = CnnModel::load(&path).unwrap();
        assert_eq!(back, model);

        // Unknown future versions are refused.
        let mut tampered: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        tampered["format_version"] = serde_json::json!(999);
        std::fs::write(&path, serde_json::to_string(&tampered).unwrap()).unwrap();
        assert!(CnnModel::load(&path).is_err());
    }

    #[test]
    fn initialization_is_seeded() {
        let a = CnnModel::standard(TrainConfig::default());
        let b = CnnModel::standard(TrainConfig::default());
        assert_eq!(a.params(), b.params());
        let c = CnnModel::standard(TrainConfig { seed: 8, ..Default::default() });
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn duplicated_batch_keeps_mean_gradients() {
        let model = CnnModel::tiny(TrainConfig::default());
        let inputs = random_inputs(3, 21);
        let labels = [1u8, 0, 1];
        let (g1, l1, _) = model.backward_batch(&inputs, &labels).unwrap();
        let doubled: Vec<Tensor> = inputs.iter().chain(inputs.iter()).cloned().collect();
        let labels2 = [1u8, 0, 1, 1, 0, 1];
        let (g2, l2, _) = model.backward_batch(&doubled, &labels2).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.flat().iter().zip(g2.flat()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn gradient_matches_central_differences_on_tiny_model() {
        let model = CnnModel::tiny(TrainConfig { seed: 11, ..Default::default() });
        let inputs = random_inputs(4, 17);
        let labels = [1u8, 0, 1, 0];
        let (analytic, _, _) = model.backward_batch(&inputs, &labels).unwrap();
        let analytic = analytic.flat();

        let h = 1e-4;
        let params = model.params();
        let mut worst = 0.0f64;
        let mut scratch = model.clone();
        for i in 0..params.len() {
            let mut plus = params.clone();
            plus[i] += h;
            scratch.set_params(&plus).unwrap();
            let lp = bce_loss(&scratch.forward_batch(&inputs).unwrap(), &labels);
            let mut minus = params.clone();
            minus[i] -= h;
            scratch.set_params(&minus).unwrap();
            let lm = bce_loss(&scratch.forward_batch(&inputs).unwrap(), &labels);
            let fd = (lp - lm) / (2.0 * h);
            let rel = (analytic[i] - fd).abs() / (analytic[i].abs() + fd.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn unused_parameters_get_zero_gradient() {
        // Zero out the last dense row: the bias alone drives the output, so
        // every upstream parameter becomes unused.
        let mut model = CnnModel::tiny(TrainConfig::default());
        let n = model.layers.len();
        if let Layer::Dense(d) = &mut model.layers[n - 1] {
            d.weights.iter_mut().for_each(|w| *w = 0.0);
        } else {
            panic!("last layer should be dense");
        }
        let inputs = random_inputs(2, 33);
        let (grads, _, _) = model.backward_batch(&inputs, &[1, 0]).unwrap();
        // Conv parameters are all upstream of the zeroed weights.
        let conv_grad = &grads.layers[0];
        assert!(conv_grad.weights.iter().all(|&g| g == 0.0));
        assert!(conv_grad.bias.iter().all(|&g| g == 0.0));
        // The output bias still learns.
        assert!(grads.layers[n - 1].bias[0] != 0.0);
    }
}
