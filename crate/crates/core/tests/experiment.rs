use perfid::dataset::{split, synth_generate, ScoreParams, Split, StyleConfig, StyleParams};
use perfid::experiment::{
    epoch_log_csv, evaluate, predictions_csv, prepare, read_predictions_csv, repeat_runs, run_experiment, score, study1,
    study2, study3, train, Corpus, ExperimentError, Level, Metrics, SegmentLength, TrainConfig,
};
use perfid::features::Combo;
use perfid::neural::{pack_batch, Adam, ConvNet, Graph, Mode, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Two pianists that differ only by a ±30 velocity offset.
fn toy_corpus(pieces: usize, min_notes: usize, max_notes: usize) -> Corpus {
    let style = |name: &str, bias: f64| StyleParams { velocity_bias: bias, ..StyleParams::identity(name) };
    let config = StyleConfig {
        score: ScoreParams { min_notes, max_notes, ..ScoreParams::default() },
        styles: vec![style("loud", 30.0), style("soft", -30.0)],
    };
    Corpus::from_synth(&synth_generate(&config, 2, pieces, 3, 5).unwrap(), 1).unwrap()
}

fn toy_config(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, length: SegmentLength::Notes(100), seed: 1, ..TrainConfig::desk() }
}

#[test]
fn separable_toy_reaches_perfect_validation_accuracy() {
    let corpus = toy_corpus(5, 300, 400);
    let data = prepare(&corpus, &split(&corpus.records(), 1), &Combo::C5).unwrap();
    let n_train = data.train.samples(SegmentLength::Notes(100)).len();
    let n_valid = data.valid.samples(SegmentLength::Notes(100)).len();
    assert!((30..=70).contains(&n_train), "{n_train} training segments");
    let outcome = train(&toy_config(20), &data).unwrap();
    assert_eq!(outcome.log.len(), 20);
    let first = outcome.log.iter().find(|e| e.valid_accuracy == 1.0);
    assert!(first.is_some(), "valid accuracy never reached 1.0 over {n_valid} segments: {:?}", outcome.log);
}

#[test]
fn zero_epochs_keeps_initial_model() {
    let corpus = toy_corpus(2, 300, 400);
    let data = prepare(&corpus, &split(&corpus.records(), 1), &Combo::C5).unwrap();
    let config = toy_config(0);
    let outcome = train(&config, &data).unwrap();
    assert!(outcome.log.is_empty());
    assert_eq!(outcome.best_epoch, 0);
    let init = ConvNet::<f32>::new(config.model_config(13, 2), config.seed).unwrap();
    assert_eq!(outcome.checkpoint.model, init);
    assert_eq!(epoch_log_csv(&outcome.log).unwrap(), "epoch,train_loss,valid_loss,valid_accuracy,valid_macro_f1\n");
}

#[test]
fn same_seed_same_log_and_checkpoint() {
    let corpus = toy_corpus(2, 300, 400);
    let data = prepare(&corpus, &split(&corpus.records(), 1), &Combo::C5).unwrap();
    let a = train(&toy_config(3), &data).unwrap();
    let b = train(&toy_config(3), &data).unwrap();
    assert_eq!(epoch_log_csv(&a.log).unwrap(), epoch_log_csv(&b.log).unwrap());
    assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
    let c = train(&TrainConfig { seed: 2, ..toy_config(3) }, &data).unwrap();
    assert_ne!(a.log, c.log);
}

#[test]
fn metrics_match_rescored_predictions() {
    let corpus = toy_corpus(3, 300, 400);
    let run = run_experiment(&corpus, &toy_config(4)).unwrap();
    let csv = predictions_csv(&run.predictions, &corpus.classes).unwrap();
    let rescored = score(&read_predictions_csv(&csv, &corpus.classes).unwrap(), corpus.classes.len());
    assert_eq!(Some(&rescored), run.result.test_segment.as_ref());
    assert_eq!(rescored.n_eval, run.predictions.len());
}

#[test]
fn scalars_follow_from_confusion() {
    let corpus = toy_corpus(3, 300, 400);
    let run = run_experiment(&corpus, &toy_config(2)).unwrap();
    let r = run.result;
    for m in [r.test_segment.as_ref().unwrap(), &r.test_piece, r.test_majority.as_ref().unwrap()] {
        let k = m.confusion.len();
        let total: usize = m.confusion.iter().flatten().sum();
        let trace: usize = (0..k).map(|i| m.confusion[i][i]).sum();
        assert_eq!(m.accuracy, trace as f64 / total as f64);
        let f1: Vec<f64> = (0..k)
            .map(|c| {
                let tp = m.confusion[c][c] as f64;
                let predicted: usize = m.confusion.iter().map(|row| row[c]).sum();
                let support: usize = m.confusion[c].iter().sum();
                let p = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
                let r = if support == 0 { 0.0 } else { tp / support as f64 };
                if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) }
            })
            .collect();
        assert_eq!(m.macro_f1, f1.iter().sum::<f64>() / k as f64);
        assert_eq!(&Metrics::from_confusion(m.confusion.clone()), m);
        assert_eq!(m.support().iter().sum::<usize>(), m.n_eval);
    }
}

#[test]
fn piece_forward_unpadded_equals_padded() {
    let corpus = toy_corpus(2, 300, 600);
    let data = prepare(&corpus, &split(&corpus.records(), 1), &Combo::C5).unwrap();
    let outcome = train(&toy_config(2), &data).unwrap();
    let model = &outcome.checkpoint.model;
    let mut pieces = data.train.samples(SegmentLength::Full);
    pieces.sort_by_key(|s| s.len);
    let (short, long) = (&pieces[0], &pieces[pieces.len() - 1]);
    assert!(short.len < long.len);
    let (x, l) = pack_batch::<f32>(&[&short.data], 13).unwrap();
    let alone = &model.predict(x, &l).unwrap()[0];
    let (x, l) = pack_batch::<f32>(&[&long.data, &short.data], 13).unwrap();
    let padded = &model.predict(x, &l).unwrap()[1];
    for (a, b) in alone.iter().zip(padded) {
        assert!((a - b).abs() < 1e-5, "{alone:?} vs {padded:?}");
    }
}

#[test]
fn early_training_loss_decreases_on_a_fixed_batch() {
    let corpus = toy_corpus(2, 300, 400);
    let data = prepare(&corpus, &split(&corpus.records(), 1), &Combo::C5).unwrap();
    let samples = data.train.samples(SegmentLength::Notes(100));
    let batch = &samples[..16.min(samples.len())];
    let seqs: Vec<&[f32]> = batch.iter().map(|s| s.data.as_slice()).collect();
    let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
    for lr in [8e-5, 1e-4] {
        let mut curve = [0.0f64; 6];
        for seed in 1..=3u64 {
            let mut model = ConvNet::<f32>::new(TrainConfig::desk().model_config(13, 2), seed).unwrap();
            let mut adam = Adam::new(&model.params(), lr, 1e-7);
            for loss_sum in curve.iter_mut() {
                // The same dropout mask every step, so only the parameters move.
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (x, lengths) = pack_batch::<f32>(&seqs, 13).unwrap();
                let mut g = Graph::new();
                let fwd = model.forward(&mut g, x, &lengths, Mode::Train(&mut rng)).unwrap();
                let loss = g.softmax_cross_entropy(fwd.logits, &labels).unwrap();
                *loss_sum += f64::from(g.value(loss).data()[0]) / 3.0;
                let mut grads = g.backward(loss).unwrap();
                let grads: Vec<Tensor<f32>> = fwd.params.iter().map(|v| grads.take(*v).unwrap()).collect();
                adam.step(&mut model.params_mut(), &grads.iter().collect::<Vec<_>>()).unwrap();
            }
        }
        assert!(curve.windows(2).all(|w| w[1] < w[0]), "lr {lr}: {curve:?}");
    }
}

#[test]
fn empty_validation_split_is_an_error() {
    // One performance per cell: every group goes to Train.
    let style = |name: &str, bias: f64| StyleParams { velocity_bias: bias, ..StyleParams::identity(name) };
    let config = StyleConfig {
        score: ScoreParams { min_notes: 300, max_notes: 400, ..ScoreParams::default() },
        styles: vec![style("a", 20.0), style("b", -20.0)],
    };
    let corpus = Corpus::from_synth(&synth_generate(&config, 2, 3, 1, 0).unwrap(), 1).unwrap();
    let data = prepare(&corpus, &split(&corpus.records(), 1), &Combo::C5).unwrap();
    assert!(matches!(train(&toy_config(1), &data), Err(ExperimentError::EmptySplit(Split::Valid))));
}

#[test]
fn exploding_learning_rate_reports_divergence() {
    let corpus = toy_corpus(2, 300, 400);
    let data = prepare(&corpus, &split(&corpus.records(), 1), &Combo::C5).unwrap();
    let config = TrainConfig { lr: 1e38, ..toy_config(5) };
    match train(&config, &data) {
        Err(ExperimentError::DivergedLoss { loss, .. }) => assert!(!loss.is_finite()),
        other => panic!("expected divergence, got {:?}", other.map(|o| o.log)),
    }
}

#[test]
fn evaluate_levels_and_schema_check() {
    let corpus = toy_corpus(2, 300, 400);
    let run = run_experiment(&corpus, &toy_config(2)).unwrap();
    let assignment = split(&corpus.records(), 1);
    let ids: Vec<&str> = assignment.ids(Split::Test).collect();
    let seg = evaluate(&run.checkpoint, &corpus, &ids, Level::Segment(100)).unwrap();
    assert_eq!(Some(&seg.metrics), run.result.test_segment.as_ref());
    let piece = evaluate(&run.checkpoint, &corpus, &ids, Level::Piece).unwrap();
    assert_eq!(piece.metrics, run.result.test_piece);
    assert_eq!(piece.metrics.n_eval, ids.len());

    let mut broken = run.checkpoint.clone();
    broken.header.schema = Combo::C4.schema();
    assert!(matches!(evaluate(&broken, &corpus, &ids, Level::Piece), Err(ExperimentError::SchemaMismatch(_))));
}

#[test]
fn repeat_runs_needs_two_seeds_and_reports_sample_std() {
    let corpus = toy_corpus(2, 300, 400);
    let config = toy_config(1);
    assert!(matches!(repeat_runs(&corpus, &config, &[1], 1), Err(ExperimentError::InvalidConfig(_))));
    let runs = repeat_runs(&corpus, &config, &[1, 2], 2).unwrap();
    assert_eq!(runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![1, 2]);
    let serial = repeat_runs(&corpus, &config, &[1, 2], 1).unwrap();
    assert_eq!(runs, serial);
}

#[test]
fn study_reports_have_expected_rows() {
    let corpus = toy_corpus(2, 1000, 1200);
    let base = TrainConfig { epochs: 1, ..TrainConfig::desk() };
    let s2 = study2(&corpus, &base, &[1, 2], 1).unwrap();
    assert_eq!(s2.rows.iter().map(|r| r.n_features).collect::<Vec<_>>(), vec![7, 6, 6, 3, 13]);
    let table = perfid::experiment::parse_markdown_table(&s2.to_markdown());
    assert_eq!(table.len(), 6);
    assert_eq!(table[0][1], "# of Features");
    for row in &table[1..] {
        assert!(row[2].parse::<perfid::experiment::MeanStd>().is_ok(), "{row:?}");
    }
    let s1 = study1(&corpus, &base, &[1, 2], 1).unwrap();
    assert_eq!(s1.rows.iter().map(|r| r.label.as_str()).collect::<Vec<_>>(), vec!["400", "600", "800", "1000", "Full"]);
    assert!(s1.rows[4].runs.iter().all(|r| r.test_segment.is_none()));
    let small = toy_corpus(1, 1000, 1200);
    let s3 = study3(&[("small", &small), ("large", &corpus)], &base, &[1, 2], 1).unwrap();
    assert_eq!(s3.rows.len(), 2);
    assert_eq!(s3.runs_csv().unwrap().lines().count(), 1 + 4);
}
