//! Classification metrics and prediction dumps.

use serde::{Deserialize, Serialize};

use super::ExperimentError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Unweighted mean of the per-class F1 scores.
    pub macro_f1: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    /// `confusion[true][pred]`.
    pub confusion: Vec<Vec<usize>>,
    pub n_eval: usize,
}

impl Metrics {
    /// Scores paired true and predicted class indices.
    pub fn from_predictions(truth: &[usize], pred: &[usize], n_classes: usize) -> Self {
        assert_eq!(truth.len(), pred.len(), "one prediction per item");
        let mut confusion = vec![vec![0; n_classes]; n_classes];
        for (&t, &p) in truth.iter().zip(pred) {
            confusion[t][p] += 1;
        }
        Self::from_confusion(confusion)
    }

    /// Precision or recall with no denominator counts as 0.
    pub fn from_confusion(confusion: Vec<Vec<usize>>) -> Self {
        let k = confusion.len();
        let total: usize = confusion.iter().flatten().sum();
        let trace: usize = (0..k).map(|i| confusion[i][i]).sum();
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let mut precision = Vec::with_capacity(k);
        let mut recall = Vec::with_capacity(k);
        let mut f1 = Vec::with_capacity(k);
        for c in 0..k {
            let tp = confusion[c][c];
            let predicted: usize = confusion.iter().map(|row| row[c]).sum();
            let support: usize = confusion[c].iter().sum();
            let (p, r) = (ratio(tp, predicted), ratio(tp, support));
            precision.push(p);
            recall.push(r);
            f1.push(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) });
        }
        let macro_f1 = if k == 0 { 0.0 } else { f1.iter().sum::<f64>() / k as f64 };
        Metrics { accuracy: ratio(trace, total), macro_f1, precision, recall, f1, confusion, n_eval: total }
    }

    pub fn support(&self) -> Vec<usize> {
        self.confusion.iter().map(|row| row.iter().sum()).collect()
    }
}

/// One scored item. Whole-piece predictions use `segment_index` 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub piece_id: String,
    pub segment_index: usize,
    pub truth: usize,
    pub pred: usize,
}

#[derive(Serialize, Deserialize)]
struct PredictionRow {
    piece_id: String,
    segment_index: usize,
    #[serde(rename = "true")]
    truth: String,
    pred: String,
}

/// `piece_id,segment_index,true,pred` with class labels spelled out.
pub fn predictions_csv(predictions: &[Prediction], classes: &[String]) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in predictions {
        w.serialize(PredictionRow {
            piece_id: p.piece_id.clone(),
            segment_index: p.segment_index,
            truth: classes[p.truth].clone(),
            pred: classes[p.pred].clone(),
        })?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| ExperimentError::Io(e.into_error()))?).expect("utf-8"))
}

pub fn read_predictions_csv(text: &str, classes: &[String]) -> Result<Vec<Prediction>, ExperimentError> {
    let index = |label: &str| {
        classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| ExperimentError::InvalidConfig(format!("unknown class {label:?} in predictions")))
    };
    let mut out = Vec::new();
    for row in csv::Reader::from_reader(text.as_bytes()).deserialize::<PredictionRow>() {
        let row = row?;
        out.push(Prediction {
            truth: index(&row.truth)?,
            pred: index(&row.pred)?,
            piece_id: row.piece_id,
            segment_index: row.segment_index,
        });
    }
    Ok(out)
}

/// Most frequent predicted class per piece, ties to the lowest index.
/// Pieces appear in order of first occurrence.
pub fn majority_vote(predictions: &[Prediction], n_classes: usize) -> Vec<Prediction> {
    let mut order: Vec<&str> = Vec::new();
    let mut votes: std::collections::HashMap<&str, (usize, Vec<usize>)> = std::collections::HashMap::new();
    for p in predictions {
        let entry = votes.entry(&p.piece_id).or_insert_with(|| {
            order.push(&p.piece_id);
            (p.truth, vec![0; n_classes])
        });
        entry.1[p.pred] += 1;
    }
    order
        .into_iter()
        .map(|id| {
            let (truth, counts) = &votes[id];
            let best = counts.iter().enumerate().fold(0, |b, (c, &n)| if n > counts[b] { c } else { b });
            Prediction { piece_id: id.to_string(), segment_index: 0, truth: *truth, pred: best }
        })
        .collect()
}

pub fn score(predictions: &[Prediction], n_classes: usize) -> Metrics {
    let truth: Vec<usize> = predictions.iter().map(|p| p.truth).collect();
    let pred: Vec<usize> = predictions.iter().map(|p| p.pred).collect();
    Metrics::from_predictions(&truth, &pred, n_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictor() {
        let truth: Vec<usize> = (0..60).map(|i| i % 6).collect();
        let m = Metrics::from_predictions(&truth, &truth, 6);
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
        for (i, row) in m.confusion.iter().enumerate() {
            for (j, &n) in row.iter().enumerate() {
                assert_eq!(n, if i == j { 10 } else { 0 });
            }
        }
    }

    #[test]
    fn constant_predictor_on_balanced_classes() {
        let truth: Vec<usize> = (0..60).map(|i| i % 6).collect();
        let m = Metrics::from_predictions(&truth, &[2; 60], 6);
        assert!((m.accuracy - 1.0 / 6.0).abs() < 1e-12);
        // One class has P = 1/6, R = 1, F1 = 2/7; the rest score 0.
        assert!((m.macro_f1 - 1.0 / 21.0).abs() < 1e-12);
        assert!((m.macro_f1 - 0.0476).abs() < 1e-4);
        assert_eq!(m.support(), vec![10; 6]);
    }

    #[test]
    fn csv_roundtrip_and_vote() {
        let classes: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let preds = vec![
            Prediction { piece_id: "x,1".into(), segment_index: 0, truth: 0, pred: 1 },
            Prediction { piece_id: "x,1".into(), segment_index: 1, truth: 0, pred: 0 },
            Prediction { piece_id: "y".into(), segment_index: 0, truth: 2, pred: 2 },
            Prediction { piece_id: "x,1".into(), segment_index: 2, truth: 0, pred: 1 },
        ];
        let text = predictions_csv(&preds, &classes).unwrap();
        assert!(text.starts_with("piece_id,segment_index,true,pred\n"));
        assert_eq!(read_predictions_csv(&text, &classes).unwrap(), preds);
        let votes = majority_vote(&preds, 3);
        assert_eq!(votes.len(), 2);
        assert_eq!((votes[0].truth, votes[0].pred), (0, 1));
        assert_eq!((votes[1].truth, votes[1].pred), (2, 2));
    }
}
