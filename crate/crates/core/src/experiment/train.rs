//! The training loop and model evaluation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{make_samples, Corpus, Prepared, Sample, SegmentLength};
use super::metrics::{majority_vote, score, Metrics, Prediction};
use super::ExperimentError;
use crate::dataset::Split;
use crate::features::{apply_normalizer, Combo};
use crate::neural::{pack_batch, Adam, Checkpoint, ConvNet, Graph, Mode, ModelConfig, Tensor};

/// Network width preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    /// Channels 128–768, about 5.8M parameters with 13 features.
    Full,
    /// Channels 16–32 with stride 2 throughout; trains on one CPU core.
    Desk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub length: SegmentLength,
    pub combo: Combo,
    pub seed: u64,
    pub arch: Arch,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::desk()
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        TrainConfig {
            batch_size: 16,
            epochs: 60,
            lr: 8e-5,
            weight_decay: 1e-7,
            length: SegmentLength::Notes(1000),
            combo: Combo::C5,
            seed: 0,
            arch: Arch::Desk,
        }
    }

    pub fn full() -> Self {
        TrainConfig { epochs: 1500, arch: Arch::Full, ..TrainConfig::desk() }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::InvalidConfig(m.to_string()));
        if self.batch_size < 2 {
            return bad("batch size must be at least 2");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be non-negative");
        }
        if matches!(self.length, SegmentLength::Notes(n) if n < 2) {
            return bad("segment length must be at least 2");
        }
        Ok(())
    }

    pub fn model_config(&self, in_features: usize, n_classes: usize) -> ModelConfig {
        match self.arch {
            Arch::Full => ModelConfig::full(in_features, n_classes),
            Arch::Desk => ModelConfig::desk(in_features, n_classes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub valid_accuracy: f64,
    pub valid_macro_f1: f64,
}

pub fn epoch_log_csv(log: &[EpochLog]) -> Result<String, ExperimentError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(["epoch", "train_loss", "valid_loss", "valid_accuracy", "valid_macro_f1"])?;
    for e in log {
        w.serialize(e)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| ExperimentError::Io(e.into_error()))?).expect("utf-8"))
}

pub struct TrainOutcome {
    /// The best epoch by validation macro-F1 (the initial model if no epoch ran).
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Chunks of `size`; a trailing chunk of one joins its predecessor, since
/// training-mode batch normalization needs two samples.
pub fn batches(order: &[usize], size: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = order.chunks(size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let last = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").extend(last);
    }
    out
}

/// Eval-mode logits for `samples`, batching runs of equal length.
pub fn predict_logits(model: &ConvNet<f32>, samples: &[Sample], batch_size: usize) -> Result<Vec<Vec<f32>>, ExperimentError> {
    let features = model.config().in_features;
    let mut out = Vec::with_capacity(samples.len());
    let mut start = 0;
    while start < samples.len() {
        let mut end = start + 1;
        while end < samples.len() && end - start < batch_size && samples[end].len == samples[start].len {
            end += 1;
        }
        let seqs: Vec<&[f32]> = samples[start..end].iter().map(|s| s.data.as_slice()).collect();
        let (x, lengths) = pack_batch::<f32>(&seqs, features)?;
        out.extend(model.predict(x, &lengths)?);
        start = end;
    }
    Ok(out)
}

fn argmax(row: &[f32]) -> usize {
    row.iter().enumerate().fold(0, |b, (i, &v)| if v > row[b] { i } else { b })
}

fn cross_entropy(row: &[f32], label: usize) -> f64 {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(f64::from(v)));
    let z: f64 = row.iter().map(|&v| (f64::from(v) - max).exp()).sum();
    max + z.ln() - f64::from(row[label])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub predictions: Vec<Prediction>,
    /// Majority vote over each piece's segments.
    pub majority: Option<Metrics>,
    pub mean_loss: f64,
}

pub fn evaluate_samples(model: &ConvNet<f32>, samples: &[Sample], batch_size: usize) -> Result<Evaluation, ExperimentError> {
    let n_classes = model.config().n_classes;
    let logits = predict_logits(model, samples, batch_size)?;
    let predictions: Vec<Prediction> = samples
        .iter()
        .zip(&logits)
        .map(|(s, row)| Prediction { piece_id: s.piece_id.clone(), segment_index: s.segment_index, truth: s.label, pred: argmax(row) })
        .collect();
    let mean_loss = if samples.is_empty() {
        0.0
    } else {
        samples.iter().zip(&logits).map(|(s, row)| cross_entropy(row, s.label)).sum::<f64>() / samples.len() as f64
    };
    let segmented = samples.iter().any(|s| s.segment_index > 0)
        || samples.iter().map(|s| &s.piece_id).collect::<std::collections::HashSet<_>>().len() < samples.len();
    let majority = segmented.then(|| score(&majority_vote(&predictions, n_classes), n_classes));
    Ok(Evaluation { metrics: score(&predictions, n_classes), predictions, majority, mean_loss })
}

pub fn train(config: &TrainConfig, data: &Prepared) -> Result<TrainOutcome, ExperimentError> {
    config.validate()?;
    let train_samples = data.train.samples(config.length);
    let valid_samples = data.valid.samples(config.length);
    if train_samples.is_empty() {
        return Err(ExperimentError::EmptySplit(Split::Train));
    }
    if valid_samples.is_empty() {
        return Err(ExperimentError::EmptySplit(Split::Valid));
    }
    if train_samples.len() < 2 {
        return Err(ExperimentError::InvalidConfig("the training split yields a single sample".into()));
    }
    let features = data.schema.len();
    let mut model = ConvNet::<f32>::new(config.model_config(features, data.classes.len()), config.seed)?;
    let mut shuffle_rng = stream(config.seed, 1);
    let mut dropout_rng = stream(config.seed, 2);
    let mut optimizer = Adam::new(&model.params(), config.lr, config.weight_decay);
    let mut best = (f64::NEG_INFINITY, 0usize, model.clone(), None::<Evaluation>);
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train_samples.len()).collect();
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for (bi, batch) in batches(&order, config.batch_size).iter().enumerate() {
            let seqs: Vec<&[f32]> = batch.iter().map(|&i| train_samples[i].data.as_slice()).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train_samples[i].label).collect();
            let (x, lengths) = pack_batch::<f32>(&seqs, features)?;
            let mut g = Graph::new();
            let fwd = model.forward(&mut g, x, &lengths, Mode::Train(&mut dropout_rng))?;
            let loss = g.softmax_cross_entropy(fwd.logits, &labels)?;
            let value = f64::from(g.value(loss).data()[0]);
            if !value.is_finite() {
                return Err(ExperimentError::DivergedLoss { epoch, batch: bi, loss: value });
            }
            total += value * batch.len() as f64;
            let mut grads = g.backward(loss)?;
            let grads: Vec<Tensor<f32>> = fwd.params.iter().map(|v| grads.take(*v).expect("parameter gradient")).collect();
            optimizer.step(&mut model.params_mut(), &grads.iter().collect::<Vec<_>>())?;
            model.update_running_stats(&fwd.batch_stats);
        }
        let eval = evaluate_samples(&model, &valid_samples, config.batch_size)?;
        log.push(EpochLog {
            epoch,
            train_loss: total / train_samples.len() as f64,
            valid_loss: eval.mean_loss,
            valid_accuracy: eval.metrics.accuracy,
            valid_macro_f1: eval.metrics.macro_f1,
        });
        if eval.metrics.macro_f1 > best.0 {
            best = (eval.metrics.macro_f1, epoch, model.clone(), Some(eval));
        }
    }

    let (_, best_epoch, best_model, best_eval) = best;
    let mut metrics = BTreeMap::new();
    if let Some(e) = best_eval {
        metrics.insert("valid_accuracy".to_string(), e.metrics.accuracy);
        metrics.insert("valid_macro_f1".to_string(), e.metrics.macro_f1);
    }
    let mut checkpoint = Checkpoint::new(
        best_model,
        data.schema.clone(),
        data.classes.clone(),
        Some(data.normalizer.clone()),
        config.seed,
        best_epoch,
        metrics,
    );
    checkpoint.header.segment_length = config.length.notes();
    Ok(TrainOutcome { checkpoint, log, best_epoch })
}

/// Scoring granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    /// Every window of the given length.
    Segment(usize),
    /// One forward pass per whole piece.
    Piece,
}

/// Scores `checkpoint` on the performances `ids` of `corpus`, applying the
/// checkpoint's feature selection and normalizer.
pub fn evaluate(checkpoint: &Checkpoint, corpus: &Corpus, ids: &[&str], level: Level) -> Result<Evaluation, ExperimentError> {
    let header = &checkpoint.header;
    if header.schema.len() != checkpoint.model.config().in_features {
        return Err(ExperimentError::SchemaMismatch("checkpoint schema disagrees with its model".into()));
    }
    let mut pieces = Vec::with_capacity(ids.len());
    for id in ids {
        let p = corpus.get(id).ok_or_else(|| ExperimentError::Piece { id: id.to_string(), reason: "not in corpus".into() })?;
        let m = p
            .features
            .select(&header.schema)
            .map_err(|e| ExperimentError::SchemaMismatch(format!("{id}: {e}")))?;
        let m = match &header.normalizer {
            Some(n) => apply_normalizer(&m, n).map_err(|e| ExperimentError::SchemaMismatch(e.to_string()))?,
            None => m,
        };
        let label = header.classes.iter().position(|c| *c == p.record.pianist).ok_or_else(|| ExperimentError::Piece {
            id: id.to_string(),
            reason: format!("pianist {:?} unknown to the checkpoint", p.record.pianist),
        })?;
        pieces.push((m, label));
    }
    let length = match level {
        Level::Segment(n) => SegmentLength::Notes(n),
        Level::Piece => SegmentLength::Full,
    };
    evaluate_samples(&checkpoint.model, &make_samples(&pieces, length), 16)
}
