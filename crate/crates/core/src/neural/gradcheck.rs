//! Central finite-difference checks of the analytic gradients.
//!
//! Each check builds a small random graph in `f64`, reduces its output to a
//! scalar with a random linear functional, and compares every input
//! gradient against `(f(θ+h) − f(θ−h)) / 2h`. The reported error is the
//! norm-wise relative difference `‖a − n‖ / (‖a‖ + ‖n‖)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use super::NeuralError;

pub const STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Conv1d { stride: usize },
    Relu,
    BatchNormTrain,
    BatchNormEval,
    Dense,
    MaskedPool,
    SoftmaxCrossEntropy,
    /// Dropout with `p = 0`, plus train-mode dropout with a fixed mask.
    DropoutOff,
}

impl Layer {
    pub const SUITE: [Layer; 10] = [
        Layer::Conv1d { stride: 1 },
        Layer::Conv1d { stride: 2 },
        Layer::Conv1d { stride: 3 },
        Layer::Relu,
        Layer::BatchNormTrain,
        Layer::BatchNormEval,
        Layer::Dense,
        Layer::MaskedPool,
        Layer::SoftmaxCrossEntropy,
        Layer::DropoutOff,
    ];

    pub fn name(&self) -> String {
        match self {
            Layer::Conv1d { stride } => format!("conv1d/stride{stride}"),
            Layer::Relu => "relu".into(),
            Layer::BatchNormTrain => "batchnorm/train".into(),
            Layer::BatchNormEval => "batchnorm/eval".into(),
            Layer::Dense => "dense".into(),
            Layer::MaskedPool => "masked_pool".into(),
            Layer::SoftmaxCrossEntropy => "softmax_ce".into(),
            Layer::DropoutOff => "dropout_off".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub layer: Layer,
    pub cases: usize,
    /// Worst relative error over all cases and inputs.
    pub max_rel_error: f64,
}

struct Case {
    inputs: Vec<Tensor<f64>>,
    build: Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var, NeuralError>>,
}

fn randn(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape")
}

/// Values bounded away from zero, so ReLU kinks stay out of reach of `h`.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.05..1.0);
            if rng.gen::<bool>() { m } else { -m }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

fn lengths(rng: &mut ChaCha8Rng, batch: usize, len: usize) -> Vec<usize> {
    let mut l: Vec<usize> = (0..batch).map(|_| rng.gen_range(1..=len)).collect();
    l[0] = len;
    l
}

fn weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn make_case(layer: Layer, rng: &mut ChaCha8Rng) -> Case {
    match layer {
        Layer::Conv1d { stride } => {
            let (b, cin, cout): (usize, usize, usize) = (rng.gen_range(1..=3), rng.gen_range(1..=4), rng.gen_range(1..=4));
            let k = [1, 3, 5, 7][rng.gen_range(0..4)];
            let len: usize = rng.gen_range(1..=12);
            let out = b * cout * len.div_ceil(stride);
            let wts = weights(rng, out);
            Case {
                inputs: vec![randn(rng, &[b, cin, len]), randn(rng, &[cout, cin, k]), randn(rng, &[cout])],
                build: Box::new(move |g, v| {
                    let y = g.conv1d(v[0], v[1], v[2], stride)?;
                    g.dot_const(y, &wts)
                }),
            }
        }
        Layer::Relu => {
            let shape = [rng.gen_range(1..=3), rng.gen_range(1..=4), rng.gen_range(1..=8)];
            let wts = weights(rng, shape.iter().product());
            Case {
                inputs: vec![away_from_zero(rng, &shape)],
                build: Box::new(move |g, v| {
                    let y = g.relu(v[0]);
                    g.dot_const(y, &wts)
                }),
            }
        }
        Layer::BatchNormTrain | Layer::BatchNormEval => {
            let (b, c, len) = (rng.gen_range(2..=4), rng.gen_range(1..=4), rng.gen_range(1..=8));
            let lens = lengths(rng, b, len);
            let wts = weights(rng, b * c * len);
            let mean = weights(rng, c);
            let var: Vec<f64> = (0..c).map(|_| rng.gen_range(0.2..2.0)).collect();
            let train = layer == Layer::BatchNormTrain;
            Case {
                inputs: vec![randn(rng, &[b, c, len]), randn(rng, &[c]), randn(rng, &[c])],
                build: Box::new(move |g, v| {
                    let y = if train {
                        g.batch_norm_train(v[0], v[1], v[2], &lens, 1e-5)?.0
                    } else {
                        g.batch_norm_eval(v[0], v[1], v[2], &mean, &var, &lens, 1e-5)?
                    };
                    g.dot_const(y, &wts)
                }),
            }
        }
        Layer::Dense => {
            let (b, fin, fout) = (rng.gen_range(1..=4), rng.gen_range(1..=8), rng.gen_range(1..=6));
            let wts = weights(rng, b * fout);
            Case {
                inputs: vec![randn(rng, &[b, fin]), randn(rng, &[fout, fin]), randn(rng, &[fout])],
                build: Box::new(move |g, v| {
                    let y = g.linear(v[0], v[1], v[2])?;
                    g.dot_const(y, &wts)
                }),
            }
        }
        Layer::MaskedPool => {
            let (b, c, len) = (rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=10));
            let lens = lengths(rng, b, len);
            let wts = weights(rng, b * c);
            Case {
                inputs: vec![randn(rng, &[b, c, len])],
                build: Box::new(move |g, v| {
                    let y = g.masked_avg_pool(v[0], &lens)?;
                    g.dot_const(y, &wts)
                }),
            }
        }
        Layer::SoftmaxCrossEntropy => {
            let (b, classes) = (rng.gen_range(1..=5), rng.gen_range(2..=6));
            let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..classes)).collect();
            let mut logits = randn(rng, &[b, classes]);
            logits.data_mut().iter_mut().for_each(|v| *v *= 3.0);
            Case { inputs: vec![logits], build: Box::new(move |g, v| g.softmax_cross_entropy(v[0], &labels)) }
        }
        Layer::DropoutOff => {
            let shape = [rng.gen_range(1..=3), rng.gen_range(1..=4), rng.gen_range(1..=8)];
            let wts = weights(rng, shape.iter().product());
            let seed = rng.gen::<u64>();
            Case {
                inputs: vec![randn(rng, &shape)],
                build: Box::new(move |g, v| {
                    let mut r = ChaCha8Rng::seed_from_u64(seed);
                    let y = g.dropout(v[0], 0.0, &mut r);
                    let y = g.dropout(y, 0.3, &mut r);
                    g.dot_const(y, &wts)
                }),
            }
        }
    }
}

fn forward_value(case: &Case, inputs: &[Tensor<f64>]) -> Result<f64, NeuralError> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = (case.build)(&mut g, &vars)?;
    Ok(g.value(out).data()[0])
}

/// Relative error of one case: analytic gradient against central differences.
fn check_case(case: &Case) -> Result<f64, NeuralError> {
    let mut g = Graph::new();
    let vars: Vec<Var> = case.inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = (case.build)(&mut g, &vars)?;
    let grads = g.backward(out)?;
    let (mut diff, mut norm_a, mut norm_n) = (0.0f64, 0.0f64, 0.0f64);
    let mut inputs = case.inputs.clone();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).expect("parameter gradient").data().to_vec();
        for (j, &a) in analytic.iter().enumerate() {
            let orig = inputs[i].data()[j];
            inputs[i].data_mut()[j] = orig + STEP;
            let plus = forward_value(case, &inputs)?;
            inputs[i].data_mut()[j] = orig - STEP;
            let minus = forward_value(case, &inputs)?;
            inputs[i].data_mut()[j] = orig;
            let n = (plus - minus) / (2.0 * STEP);
            diff += (a - n) * (a - n);
            norm_a += a * a;
            norm_n += n * n;
        }
    }
    let denom = norm_a.sqrt() + norm_n.sqrt();
    Ok(if denom == 0.0 { 0.0 } else { diff.sqrt() / denom })
}

/// Runs `cases` random instances of `layer`.
pub fn check_layer(layer: Layer, cases: usize, seed: u64) -> Result<GradCheck, NeuralError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let case = make_case(layer, &mut rng);
        worst = worst.max(check_case(&case)?);
    }
    Ok(GradCheck { layer, cases, max_rel_error: worst })
}
