//! Training, evaluation, repeated runs and study reports.

use thiserror::Error;

use crate::dataset::{DatasetError, Split};
use crate::features::FeatureError;
use crate::neural::NeuralError;

pub mod data;
pub mod metrics;
pub mod report;
pub mod train;

pub use data::{extract_pair, prepare, Corpus, Performance, Prepared, Sample, SegmentLength};
pub use metrics::{majority_vote, predictions_csv, read_predictions_csv, score, Metrics, Prediction};
pub use report::{
    mean_std, parse_markdown_table, repeat_runs, run_experiment, run_on_split, study1, study2, study3, summarize, MeanStd, RunOutcome,
    RunResult, StudyReport, StudyRow, Summary,
};
pub use train::{epoch_log_csv, evaluate, evaluate_samples, train, Arch, EpochLog, Evaluation, Level, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("the {0} split has no samples (too few performances, or every piece is shorter than the segment length)")]
    EmptySplit(Split),
    #[error("loss became {loss} at epoch {epoch}, batch {batch}")]
    DivergedLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{id}: {reason}")]
    Piece { id: String, reason: String },
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Order-preserving map over at most `threads` workers.
pub(crate) fn par_map<T: Sync, R: Send>(
    items: &[T],
    threads: usize,
    f: impl Fn(&T) -> R + Sync + Send,
) -> Result<Vec<R>, ExperimentError> {
    use rayon::prelude::*;
    if threads <= 1 {
        return Ok(items.iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ExperimentError::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}
