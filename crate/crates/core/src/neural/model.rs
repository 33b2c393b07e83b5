//! The one-dimensional convolutional classifier.
//!
//! Five convolution blocks (convolution → ReLU → batch normalization →
//! optional dropout) feed a length-masked global average pool, dropout, and
//! one dense layer producing class logits.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::graph::{conv_out_len, BatchStats, Graph, Var};
use super::tensor::{Float, Tensor};
use super::NeuralError;

pub const CONV_LAYERS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_features: usize,
    pub n_classes: usize,
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    pub strides: Vec<usize>,
    /// Dropout after each convolution block.
    pub conv_dropout: Vec<f64>,
    /// Dropout before the dense layer.
    pub dense_dropout: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_features: 13,
            n_classes: 6,
            channels: vec![128, 256, 512, 512, 768],
            kernel_size: 7,
            strides: vec![1, 2, 2, 2, 2],
            conv_dropout: vec![0.0, 0.0, 0.0, 0.25, 0.25],
            dense_dropout: 0.5,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    /// Full-width network for `in_features` inputs.
    pub fn full(in_features: usize, n_classes: usize) -> Self {
        ModelConfig { in_features, n_classes, ..ModelConfig::default() }
    }

    /// Same topology with narrow layers, sized for single-core CPU training.
    pub fn desk(in_features: usize, n_classes: usize) -> Self {
        ModelConfig {
            in_features,
            n_classes,
            channels: vec![16, 16, 32, 32, 32],
            strides: vec![2, 2, 2, 2, 2],
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: &str| Err(NeuralError::InvalidConfig(m.to_string()));
        if self.channels.len() != CONV_LAYERS || self.strides.len() != CONV_LAYERS || self.conv_dropout.len() != CONV_LAYERS {
            return bad("five convolution layers are required (channels, strides, conv_dropout)");
        }
        if self.in_features == 0 || self.n_classes < 2 || self.channels.iter().any(|&c| c == 0) {
            return bad("feature, class and channel counts must be positive (at least 2 classes)");
        }
        if self.kernel_size % 2 == 0 || self.strides.iter().any(|&s| s == 0) {
            return bad("kernel size must be odd and strides positive");
        }
        if self.conv_dropout.iter().chain([&self.dense_dropout]).any(|p| !(0.0..1.0).contains(p)) {
            return bad("dropout rates must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) || self.bn_eps <= 0.0 {
            return bad("batch norm momentum must lie in [0, 1] and eps be positive");
        }
        Ok(())
    }
}

/// Trainable parameter count: convolution weights and biases, batch-norm
/// scale and shift, dense weights and bias. Works for any number of
/// convolution layers, including none.
pub fn param_count(config: &ModelConfig) -> usize {
    let mut total = 0;
    let mut cin = config.in_features;
    for &c in &config.channels {
        total += cin * c * config.kernel_size + c + 2 * c;
        cin = c;
    }
    total + cin * config.n_classes + config.n_classes
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvNet<T> {
    config: ModelConfig,
    pub blocks: Vec<ConvBlock<T>>,
    pub dense_weight: Tensor<T>,
    pub dense_bias: Tensor<T>,
}

pub enum Mode<'a> {
    /// Batch statistics and dropout drawn from the given generator.
    Train(&'a mut ChaCha8Rng),
    Eval,
}

/// Output of one forward pass.
pub struct Forward<T> {
    pub logits: Var,
    /// Parameter handles in declaration order.
    pub params: Vec<Var>,
    /// Batch statistics per block (training mode only).
    pub batch_stats: Vec<BatchStats<T>>,
}

fn uniform<T: Float>(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64_lossy(rng.gen_range(-bound..bound))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

impl<T: Float> ConvNet<T> {
    /// Fan-in scaled uniform initialization; batch norm starts at γ=1, β=0.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, NeuralError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = config.kernel_size;
        let mut cin = config.in_features;
        let mut blocks = Vec::with_capacity(CONV_LAYERS);
        for &c in &config.channels {
            let bound = 1.0 / ((cin * k) as f64).sqrt();
            blocks.push(ConvBlock {
                weight: uniform(&mut rng, &[c, cin, k], bound),
                bias: uniform(&mut rng, &[c], bound),
                gamma: Tensor::full(&[c], T::one()),
                beta: Tensor::zeros(&[c]),
                running_mean: vec![T::zero(); c],
                running_var: vec![T::one(); c],
            });
            cin = c;
        }
        let bound = 1.0 / (cin as f64).sqrt();
        let dense_weight = uniform(&mut rng, &[config.n_classes, cin], bound);
        let dense_bias = uniform(&mut rng, &[config.n_classes], bound);
        Ok(ConvNet { config, blocks, dense_weight, dense_bias })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Parameters in declaration order.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::with_capacity(4 * self.blocks.len() + 2);
        for b in &self.blocks {
            out.extend([&b.weight, &b.bias, &b.gamma, &b.beta]);
        }
        out.extend([&self.dense_weight, &self.dense_bias]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::with_capacity(4 * self.blocks.len() + 2);
        for b in &mut self.blocks {
            out.extend([&mut b.weight, &mut b.bias, &mut b.gamma, &mut b.beta]);
        }
        out.extend([&mut self.dense_weight, &mut self.dense_bias]);
        out
    }

    /// Running statistics, `mean` then `var` per block.
    pub fn buffers(&self) -> Vec<&Vec<T>> {
        self.blocks.iter().flat_map(|b| [&b.running_mean, &b.running_var]).collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Vec<T>> {
        self.blocks.iter_mut().flat_map(|b| [&mut b.running_mean, &mut b.running_var]).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    /// Runs the network on `x: [batch, in_features, len]`, where sample `i`
    /// occupies its first `lengths[i]` positions and the rest is padding.
    pub fn forward(&self, g: &mut Graph<T>, x: Tensor<T>, lengths: &[usize], mode: Mode<'_>) -> Result<Forward<T>, NeuralError> {
        let xs = x.shape();
        if xs.len() != 3 || xs[1] != self.config.in_features {
            return Err(NeuralError::ShapeMismatch(format!(
                "input {xs:?}, expected [batch, {}, len]",
                self.config.in_features
            )));
        }
        let train = matches!(mode, Mode::Train(_));
        let mut rng = match mode {
            Mode::Train(r) => Some(r),
            Mode::Eval => None,
        };
        let params: Vec<Var> = self
            .params()
            .into_iter()
            .map(|p| if train { g.param(p.clone()) } else { g.input(p.clone()) })
            .collect();
        let mut h = g.input(x);
        let mut lens = lengths.to_vec();
        let mut batch_stats = Vec::new();
        for (i, block) in self.blocks.iter().enumerate() {
            let [w, b, gamma, beta] = [params[4 * i], params[4 * i + 1], params[4 * i + 2], params[4 * i + 3]];
            let stride = self.config.strides[i];
            h = g.conv1d(h, w, b, stride)?;
            h = g.relu(h);
            lens.iter_mut().for_each(|l| *l = conv_out_len(*l, stride));
            h = match rng.as_deref_mut() {
                Some(_) => {
                    let (out, stats) = g.batch_norm_train(h, gamma, beta, &lens, self.config.bn_eps)?;
                    batch_stats.push(stats);
                    out
                }
                None => g.batch_norm_eval(h, gamma, beta, &block.running_mean, &block.running_var, &lens, self.config.bn_eps)?,
            };
            if let Some(r) = rng.as_deref_mut() {
                h = g.dropout(h, self.config.conv_dropout[i], r);
            }
        }
        h = g.masked_avg_pool(h, &lens)?;
        if let Some(r) = rng.as_deref_mut() {
            h = g.dropout(h, self.config.dense_dropout, r);
        }
        let n = params.len();
        let logits = g.linear(h, params[n - 2], params[n - 1])?;
        Ok(Forward { logits, params, batch_stats })
    }

    /// Exponential moving average of batch statistics (unbiased variance).
    pub fn update_running_stats(&mut self, stats: &[BatchStats<T>]) {
        let m = T::from_f64_lossy(self.config.bn_momentum);
        for (block, s) in self.blocks.iter_mut().zip(stats) {
            let correction = if s.count > 1 {
                T::from_f64_lossy(s.count as f64 / (s.count - 1) as f64)
            } else {
                T::one()
            };
            for c in 0..block.running_mean.len() {
                block.running_mean[c] = (T::one() - m) * block.running_mean[c] + m * s.mean[c];
                block.running_var[c] = (T::one() - m) * block.running_var[c] + m * s.var[c] * correction;
            }
        }
    }

    /// Eval-mode logits, one row per sample.
    pub fn predict(&self, x: Tensor<T>, lengths: &[usize]) -> Result<Vec<Vec<T>>, NeuralError> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, x, lengths, Mode::Eval)?;
        let logits = g.value(out.logits);
        Ok(logits.data().chunks_exact(self.config.n_classes).map(<[T]>::to_vec).collect())
    }

    /// Converts parameters and buffers to another precision.
    pub fn cast<U: Float>(&self) -> ConvNet<U> {
        let t = |x: &Tensor<T>| Tensor::new(x.shape().to_vec(), x.data().iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect()).expect("same shape");
        let v = |x: &[T]| x.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect();
        ConvNet {
            config: self.config.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| ConvBlock {
                    weight: t(&b.weight),
                    bias: t(&b.bias),
                    gamma: t(&b.gamma),
                    beta: t(&b.beta),
                    running_mean: v(&b.running_mean),
                    running_var: v(&b.running_var),
                })
                .collect(),
            dense_weight: t(&self.dense_weight),
            dense_bias: t(&self.dense_bias),
        }
    }
}

/// Packs feature sequences (`len × features`, row-major) into a zero-padded
/// `[batch, features, max_len]` tensor plus their lengths.
pub fn pack_batch<T: Float>(seqs: &[&[f32]], features: usize) -> Result<(Tensor<T>, Vec<usize>), NeuralError> {
    if seqs.is_empty() {
        return Err(NeuralError::ShapeMismatch("empty batch".into()));
    }
    let mut lengths = Vec::with_capacity(seqs.len());
    for s in seqs {
        if s.len() % features != 0 {
            return Err(NeuralError::ShapeMismatch(format!("{} values not a multiple of {features}", s.len())));
        }
        let l = s.len() / features;
        if l == 0 {
            return Err(NeuralError::ZeroLength);
        }
        lengths.push(l);
    }
    let max_len = *lengths.iter().max().expect("non-empty");
    let mut data = vec![T::zero(); seqs.len() * features * max_len];
    for (b, s) in seqs.iter().enumerate() {
        for (t, row) in s.chunks_exact(features).enumerate() {
            for (f, &v) in row.iter().enumerate() {
                data[(b * features + f) * max_len + t] = T::from_f64_lossy(f64::from(v));
            }
        }
    }
    Ok((Tensor::new(vec![seqs.len(), features, max_len], data)?, lengths))
}
