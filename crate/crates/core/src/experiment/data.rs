//! From performances to normalized training samples.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{par_map, ExperimentError};
use crate::align::{align, filter_matched, info_loss};
use crate::dataset::{PerformanceRecord, Registry, Split, SplitAssignment, SynthCorpus};
use crate::features::{apply_normalizer, assemble, fit_normalizer, segment, Combo, FeatureMatrix, FeatureSchema, Normalizer};
use crate::midi::{parse_midi, NoteList};

/// Window length in notes, or the whole piece.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum SegmentLength {
    Notes(usize),
    Full,
}

impl SegmentLength {
    pub const STUDY: [SegmentLength; 5] = [
        SegmentLength::Notes(400),
        SegmentLength::Notes(600),
        SegmentLength::Notes(800),
        SegmentLength::Notes(1000),
        SegmentLength::Full,
    ];

    pub fn notes(self) -> Option<usize> {
        match self {
            SegmentLength::Notes(n) => Some(n),
            SegmentLength::Full => None,
        }
    }
}

impl fmt::Display for SegmentLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SegmentLength::Notes(n) => write!(f, "{n}"),
            SegmentLength::Full => f.write_str("full"),
        }
    }
}

impl FromStr for SegmentLength {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("full") {
            return Ok(SegmentLength::Full);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 2 => Ok(SegmentLength::Notes(n)),
            _ => Err(ExperimentError::InvalidConfig(format!("segment length must be an integer ≥ 2 or \"full\", got {s:?}"))),
        }
    }
}

impl From<SegmentLength> for String {
    fn from(l: SegmentLength) -> String {
        l.to_string()
    }
}

impl TryFrom<String> for SegmentLength {
    type Error = ExperimentError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// One extracted performance.
#[derive(Debug, Clone, PartialEq)]
pub struct Performance {
    pub record: PerformanceRecord,
    /// All thirteen feature columns over the matched notes.
    pub features: FeatureMatrix,
    /// Percentage of performance notes left unmatched.
    pub info_loss: f64,
}

/// Extracted feature sequences for every performance of a registry.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    /// Class index → pianist.
    pub classes: Vec<String>,
    pub performances: Vec<Performance>,
}

/// Aligns one performance to its score and builds the full feature matrix.
pub fn extract_pair(perf: &NoteList, score: &NoteList, record: &PerformanceRecord) -> Result<Performance, ExperimentError> {
    let piece = |reason: String| ExperimentError::Piece { id: record.id.clone(), reason };
    let alignment = align(perf, score).map_err(|e| piece(format!("alignment failed: {e}")))?;
    let loss = info_loss(&alignment).map_err(|e| piece(e.to_string()))?;
    let pairs = filter_matched(&alignment, perf, score).map_err(|e| piece(e.to_string()))?;
    let features = assemble(&pairs, &Combo::C5, record.pianist.clone(), record.id.clone()).map_err(|e| piece(e.to_string()))?;
    Ok(Performance { record: record.clone(), features, info_loss: loss })
}

fn read_midi(root: &Path, rel: &Path, id: &str) -> Result<NoteList, ExperimentError> {
    let path = root.join(rel);
    let bytes = std::fs::read(&path)
        .map_err(|e| ExperimentError::Piece { id: id.to_string(), reason: format!("{}: {e}", path.display()) })?;
    parse_midi(&bytes)
        .map(|p| p.notes)
        .map_err(|e| ExperimentError::Piece { id: id.to_string(), reason: format!("{}: {e}", path.display()) })
}

impl Corpus {
    pub fn new(performances: Vec<Performance>) -> Self {
        let mut classes: Vec<String> = performances.iter().map(|p| p.record.pianist.clone()).collect();
        classes.sort();
        classes.dedup();
        Corpus { classes, performances }
    }

    /// Parses every MIDI pair named by `registry` (paths relative to `root`).
    pub fn from_registry(registry: &Registry, root: &Path, threads: usize) -> Result<Self, ExperimentError> {
        let perfs = par_map(&registry.performances, threads, |r| {
            let perf = read_midi(root, &r.perf_midi, &r.id)?;
            let score = read_midi(root, &r.score_midi, &r.id)?;
            extract_pair(&perf, &score, r)
        })?;
        Ok(Corpus::new(perfs.into_iter().collect::<Result<_, _>>()?))
    }

    /// Extracts directly from an in-memory synthetic corpus.
    pub fn from_synth(synth: &SynthCorpus, threads: usize) -> Result<Self, ExperimentError> {
        let items: Vec<(&PerformanceRecord, &NoteList)> =
            synth.registry.performances.iter().zip(&synth.performances).collect();
        let perfs = par_map(&items, threads, |(r, perf)| {
            let score = synth
                .scores
                .iter()
                .find(|(id, _)| *id == r.composition)
                .map(|(_, s)| s)
                .ok_or_else(|| ExperimentError::Piece { id: r.id.clone(), reason: "score missing from corpus".into() })?;
            extract_pair(perf, score, r)
        })?;
        Ok(Corpus::new(perfs.into_iter().collect::<Result<_, _>>()?))
    }

    pub fn records(&self) -> Vec<PerformanceRecord> {
        self.performances.iter().map(|p| p.record.clone()).collect()
    }

    pub fn label(&self, pianist: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == pianist)
    }

    pub fn get(&self, id: &str) -> Option<&Performance> {
        self.performances.iter().find(|p| p.record.id == id)
    }

    pub fn in_split<'a>(&'a self, assignment: &'a SplitAssignment, split: Split) -> impl Iterator<Item = &'a Performance> {
        self.performances.iter().filter(move |p| assignment.get(&p.record.id) == Some(split))
    }
}

/// A network input: `len` rows of `schema` columns, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub piece_id: String,
    pub segment_index: usize,
    pub label: usize,
    pub len: usize,
    pub data: Vec<f32>,
}

/// Windows (or whole pieces) of the normalized matrices.
pub fn make_samples(matrices: &[(FeatureMatrix, usize)], length: SegmentLength) -> Vec<Sample> {
    let mut out = Vec::new();
    for (m, label) in matrices {
        let windows = match length {
            SegmentLength::Notes(n) => segment(m, n),
            SegmentLength::Full => vec![m.clone()],
        };
        out.extend(windows.iter().enumerate().filter(|(_, w)| w.n_rows() > 0).map(|(i, w)| Sample {
            piece_id: m.piece_id.clone(),
            segment_index: i,
            label: *label,
            len: w.n_rows(),
            data: w.to_f32(),
        }));
    }
    out
}

/// Normalized, combo-selected matrices of one split, with class labels.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub pieces: Vec<(FeatureMatrix, usize)>,
}

impl SplitData {
    pub fn samples(&self, length: SegmentLength) -> Vec<Sample> {
        make_samples(&self.pieces, length)
    }
}

/// Everything a run needs: the three splits under one schema and the
/// normalizer fitted on the training split.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub schema: FeatureSchema,
    pub normalizer: Normalizer,
    pub classes: Vec<String>,
    pub train: SplitData,
    pub valid: SplitData,
    pub test: SplitData,
}

pub fn prepare(corpus: &Corpus, assignment: &SplitAssignment, combo: &Combo) -> Result<Prepared, ExperimentError> {
    let schema = combo.schema();
    let selected = |split: Split| -> Result<Vec<(FeatureMatrix, usize)>, ExperimentError> {
        corpus
            .in_split(assignment, split)
            .map(|p| {
                let label = corpus.label(&p.record.pianist).expect("pianist listed in classes");
                Ok((p.features.select(&schema)?, label))
            })
            .collect()
    };
    let train = selected(Split::Train)?;
    if train.is_empty() {
        return Err(ExperimentError::EmptySplit(Split::Train));
    }
    let normalizer = fit_normalizer(&train.iter().map(|(m, _)| m.clone()).collect::<Vec<_>>())?;
    let normalize = |pieces: Vec<(FeatureMatrix, usize)>| -> Result<SplitData, ExperimentError> {
        let pieces = pieces
            .into_iter()
            .map(|(m, l)| Ok((apply_normalizer(&m, &normalizer)?, l)))
            .collect::<Result<_, ExperimentError>>()?;
        Ok(SplitData { pieces })
    };
    Ok(Prepared {
        train: normalize(train)?,
        valid: normalize(selected(Split::Valid)?)?,
        test: normalize(selected(Split::Test)?)?,
        schema,
        normalizer,
        classes: corpus.classes.clone(),
    })
}
