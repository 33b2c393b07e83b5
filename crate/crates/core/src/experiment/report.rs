//! Repeated runs, summary statistics and the three studies.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::data::{prepare, Corpus, SegmentLength};
use super::metrics::{Metrics, Prediction};
use super::train::{evaluate_samples, train, EpochLog, TrainConfig};
use super::{par_map, ExperimentError};
use crate::dataset::{split, SplitAssignment};
use crate::features::Combo;
use crate::neural::Checkpoint;

/// Mean and sample standard deviation, printed as `0.800 (0.100)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Sample (n − 1) standard deviation; zero for a single value.
pub fn mean_std(values: &[f64]) -> MeanStd {
    if values.is_empty() {
        return MeanStd { mean: f64::NAN, std: f64::NAN };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    MeanStd { mean, std }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ({:.3})", self.mean, self.std)
    }
}

impl FromStr for MeanStd {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ExperimentError::InvalidConfig(format!("expected \"mean (std)\", got {s:?}"));
        let (mean, rest) = s.trim().split_once('(').ok_or_else(bad)?;
        let std = rest.trim().strip_suffix(')').ok_or_else(bad)?;
        Ok(MeanStd { mean: mean.trim().parse().map_err(|_| bad())?, std: std.trim().parse().map_err(|_| bad())? })
    }
}

/// Outcome of one seeded train/evaluate cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub combo: String,
    pub length: SegmentLength,
    pub n_features: usize,
    pub best_epoch: usize,
    /// Test windows; absent for whole-piece runs.
    pub test_segment: Option<Metrics>,
    /// One forward pass per whole test piece.
    pub test_piece: Metrics,
    /// Majority vote over each test piece's windows.
    pub test_majority: Option<Metrics>,
    pub log: Vec<EpochLog>,
}

impl RunResult {
    /// The metrics at the level the model was trained on.
    pub fn headline(&self) -> &Metrics {
        self.test_segment.as_ref().unwrap_or(&self.test_piece)
    }
}

pub struct RunOutcome {
    pub result: RunResult,
    pub checkpoint: Checkpoint,
    pub predictions: Vec<Prediction>,
}

/// Splits with the run seed, trains, and scores the test split.
pub fn run_experiment(corpus: &Corpus, config: &TrainConfig) -> Result<RunOutcome, ExperimentError> {
    run_on_split(corpus, config, &split(&corpus.records(), config.seed))
}

/// Trains and scores under a given assignment.
pub fn run_on_split(corpus: &Corpus, config: &TrainConfig, assignment: &SplitAssignment) -> Result<RunOutcome, ExperimentError> {
    let data = prepare(corpus, assignment, &config.combo)?;
    let outcome = train(config, &data)?;
    let model = &outcome.checkpoint.model;
    let pieces = evaluate_samples(model, &data.test.samples(SegmentLength::Full), config.batch_size)?;
    let (test_segment, test_majority, predictions) = match config.length {
        SegmentLength::Notes(_) => {
            let seg = evaluate_samples(model, &data.test.samples(config.length), config.batch_size)?;
            (Some(seg.metrics), seg.majority, seg.predictions)
        }
        SegmentLength::Full => (None, None, pieces.predictions.clone()),
    };
    let result = RunResult {
        seed: config.seed,
        combo: config.combo.name(),
        length: config.length,
        n_features: data.schema.len(),
        best_epoch: outcome.best_epoch,
        test_segment,
        test_piece: pieces.metrics,
        test_majority,
        log: outcome.log,
    };
    Ok(RunOutcome { result, checkpoint: outcome.checkpoint, predictions })
}

/// One run per seed, up to `threads` at a time; results in seed order.
pub fn repeat_runs(corpus: &Corpus, config: &TrainConfig, seeds: &[u64], threads: usize) -> Result<Vec<RunResult>, ExperimentError> {
    if seeds.len() < 2 {
        return Err(ExperimentError::InvalidConfig("repeated runs need at least 2 seeds".into()));
    }
    par_map(seeds, threads, |&seed| {
        run_experiment(corpus, &TrainConfig { seed, ..config.clone() }).map(|o| o.result)
    })?
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub accuracy: MeanStd,
    pub macro_f1: MeanStd,
    pub best_accuracy: f64,
    pub best_macro_f1: f64,
}

pub fn summarize(runs: &[RunResult]) -> Summary {
    let acc: Vec<f64> = runs.iter().map(|r| r.headline().accuracy).collect();
    let f1: Vec<f64> = runs.iter().map(|r| r.headline().macro_f1).collect();
    Summary {
        accuracy: mean_std(&acc),
        macro_f1: mean_std(&f1),
        best_accuracy: acc.iter().copied().fold(f64::NAN, f64::max),
        best_macro_f1: f1.iter().copied().fold(f64::NAN, f64::max),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub label: String,
    pub n_features: usize,
    pub summary: Summary,
    pub runs: Vec<RunResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub id: String,
    pub rows: Vec<StudyRow>,
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = format!("| {} |\n|{}|\n", header.join(" | "), vec!["---"; header.len()].join("|"));
    for r in rows {
        out.push_str(&format!("| {} |\n", r.join(" | ")));
    }
    out
}

impl StudyReport {
    pub fn to_markdown(&self) -> String {
        let runs = self.rows.first().map_or(0, |r| r.runs.len());
        let title = match self.id.as_str() {
            "study1" => "Sequence length",
            "study2" => "Feature combination",
            "study3" => "Split sensitivity",
            _ => "Study",
        };
        let mut out = format!("# {title}\n\n{runs} runs per row; test-split scores, mean (sample std).\n\n");
        let header = match self.id.as_str() {
            "study1" => ["Length", "# of Features", "Acc. (Std.)", "F1 (Std.)", "Best Acc.", "Best F1"],
            "study3" => ["Corpus", "# of Features", "Acc. (Std.)", "F1 (Std.)", "Best Acc.", "Best F1"],
            _ => ["Combo", "# of Features", "Acc. (Std.)", "F1 (Std.)", "Best Acc.", "Best F1"],
        };
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.label.clone(),
                    r.n_features.to_string(),
                    r.summary.accuracy.to_string(),
                    r.summary.macro_f1.to_string(),
                    format!("{:.3}", r.summary.best_accuracy),
                    format!("{:.3}", r.summary.best_macro_f1),
                ]
            })
            .collect();
        out.push_str(&table(&header, &rows));
        out
    }

    /// One line per run.
    pub fn runs_csv(&self) -> Result<String, ExperimentError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "row", "seed", "combo", "length", "n_features", "best_epoch", "accuracy", "macro_f1", "piece_accuracy",
            "piece_macro_f1",
        ])?;
        for row in &self.rows {
            for r in &row.runs {
                let h = r.headline();
                w.write_record([
                    row.label.clone(),
                    r.seed.to_string(),
                    r.combo.clone(),
                    r.length.to_string(),
                    r.n_features.to_string(),
                    r.best_epoch.to_string(),
                    format!("{:.6}", h.accuracy),
                    format!("{:.6}", h.macro_f1),
                    format!("{:.6}", r.test_piece.accuracy),
                    format!("{:.6}", r.test_piece.macro_f1),
                ])?;
            }
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| ExperimentError::Io(e.into_error()))?).expect("utf-8"))
    }
}

/// Cells of the first Markdown table in `text`, header row included.
pub fn parse_markdown_table(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(str::trim)
        .skip_while(|l| !l.starts_with('|'))
        .take_while(|l| l.starts_with('|'))
        .filter(|l| !l.trim_matches(|c| c == '|' || c == '-' || c == ' ').is_empty())
        .map(|l| l.trim_matches('|').split('|').map(|c| c.trim().to_string()).collect())
        .collect()
}

fn row(label: String, runs: Vec<RunResult>) -> StudyRow {
    StudyRow { label, n_features: runs.first().map_or(0, |r| r.n_features), summary: summarize(&runs), runs }
}

/// Sweeps segment lengths 400, 600, 800, 1000 and whole pieces at C5.
pub fn study1(corpus: &Corpus, base: &TrainConfig, seeds: &[u64], threads: usize) -> Result<StudyReport, ExperimentError> {
    let mut rows = Vec::new();
    for length in SegmentLength::STUDY {
        let config = TrainConfig { length, combo: Combo::C5, ..base.clone() };
        let label = match length {
            SegmentLength::Notes(n) => n.to_string(),
            SegmentLength::Full => "Full".into(),
        };
        rows.push(row(label, repeat_runs(corpus, &config, seeds, threads)?));
    }
    Ok(StudyReport { id: "study1".into(), rows })
}

/// Sweeps the five named feature combinations at length 1000.
pub fn study2(corpus: &Corpus, base: &TrainConfig, seeds: &[u64], threads: usize) -> Result<StudyReport, ExperimentError> {
    let mut rows = Vec::new();
    for combo in Combo::NAMED {
        let config = TrainConfig { length: SegmentLength::Notes(1000), combo: combo.clone(), ..base.clone() };
        rows.push(row(combo.name(), repeat_runs(corpus, &config, seeds, threads)?));
    }
    Ok(StudyReport { id: "study2".into(), rows })
}

/// Repeats the base configuration over split seeds on each named corpus.
pub fn study3(corpora: &[(&str, &Corpus)], base: &TrainConfig, seeds: &[u64], threads: usize) -> Result<StudyReport, ExperimentError> {
    let mut rows = Vec::new();
    for (name, corpus) in corpora {
        let label = format!("{name} ({} performances)", corpus.performances.len());
        rows.push(row(label, repeat_runs(corpus, base, seeds, threads)?));
    }
    Ok(StudyReport { id: "study3".into(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        let m = mean_std(&[0.7, 0.8, 0.9]);
        assert!((m.mean - 0.8).abs() < 1e-12);
        assert!((m.std - 0.1).abs() < 1e-12);
        assert_eq!(m.to_string(), "0.800 (0.100)");
        assert_eq!(mean_std(&[0.5, 0.5, 0.5]).std, 0.0);
    }

    #[test]
    fn mean_std_parses_its_format() {
        for (mean, std) in [(0.766, 0.024), (0.731, 0.077), (1.0, 0.0)] {
            let m = MeanStd { mean, std };
            assert_eq!(m.to_string().parse::<MeanStd>().unwrap(), m);
        }
        assert!("0.8".parse::<MeanStd>().is_err());
    }
}
