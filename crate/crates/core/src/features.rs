//! Expressive note-level features.
//!
//! Seven note-wise features are computed over the performance notes of the
//! matched pairs, and six deviation features compare each performance value
//! with its score counterpart mapped into performance time. Feature
//! combinations pick columns from those thirteen.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::least_squares;
use crate::midi::Note;

/// Standard deviations are floored here before normalizing.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("need at least 2 matched notes, got {0}")]
    TooFewNotes(usize),
    #[error("score onsets are all equal; tempo map undefined")]
    DegenerateFit,
    #[error("unknown feature combination {0:?}")]
    UnknownCombination(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("non-finite value in row {row}, column {column}")]
    NonFinite { row: usize, column: String },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("cannot fit a normalizer on an empty training set")]
    EmptyTrainingSet,
    #[error("feature file {path}: {reason}")]
    File { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureColumn {
    Pitch,
    Velocity,
    Onset,
    Offset,
    Duration,
    Ioi,
    Otd,
    DevVelocity,
    DevOnset,
    DevOffset,
    DevDuration,
    DevIoi,
    DevOtd,
}

impl FeatureColumn {
    pub const ALL: [FeatureColumn; 13] = [
        FeatureColumn::Pitch,
        FeatureColumn::Velocity,
        FeatureColumn::Onset,
        FeatureColumn::Offset,
        FeatureColumn::Duration,
        FeatureColumn::Ioi,
        FeatureColumn::Otd,
        FeatureColumn::DevVelocity,
        FeatureColumn::DevOnset,
        FeatureColumn::DevOffset,
        FeatureColumn::DevDuration,
        FeatureColumn::DevIoi,
        FeatureColumn::DevOtd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureColumn::Pitch => "pitch",
            FeatureColumn::Velocity => "velocity",
            FeatureColumn::Onset => "onset",
            FeatureColumn::Offset => "offset",
            FeatureColumn::Duration => "duration",
            FeatureColumn::Ioi => "ioi",
            FeatureColumn::Otd => "otd",
            FeatureColumn::DevVelocity => "dev_velocity",
            FeatureColumn::DevOnset => "dev_onset",
            FeatureColumn::DevOffset => "dev_offset",
            FeatureColumn::DevDuration => "dev_duration",
            FeatureColumn::DevIoi => "dev_ioi",
            FeatureColumn::DevOtd => "dev_otd",
        }
    }

    /// Position in the full 13-column layout.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for FeatureColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureColumn {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureColumn::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| FeatureError::InvalidSchema(format!("unknown column {s:?}")))
    }
}

/// Ordered, duplicate-free list of feature columns.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<FeatureColumn>", into = "Vec<FeatureColumn>")]
pub struct FeatureSchema(Vec<FeatureColumn>);

impl FeatureSchema {
    pub fn new(columns: Vec<FeatureColumn>) -> Result<Self, FeatureError> {
        if columns.is_empty() {
            return Err(FeatureError::InvalidSchema("schema is empty".into()));
        }
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].contains(c) {
                return Err(FeatureError::InvalidSchema(format!("duplicate column {c}")));
            }
        }
        Ok(FeatureSchema(columns))
    }

    pub fn parse_names(names: &[impl AsRef<str>]) -> Result<Self, FeatureError> {
        Self::new(names.iter().map(|n| n.as_ref().parse()).collect::<Result<_, _>>()?)
    }

    pub fn full() -> Self {
        FeatureSchema(FeatureColumn::ALL.to_vec())
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.0.iter().map(|c| c.name()).collect()
    }
}

impl TryFrom<Vec<FeatureColumn>> for FeatureSchema {
    type Error = FeatureError;

    fn try_from(v: Vec<FeatureColumn>) -> Result<Self, Self::Error> {
        FeatureSchema::new(v)
    }
}

impl From<FeatureSchema> for Vec<FeatureColumn> {
    fn from(s: FeatureSchema) -> Self {
        s.0
    }
}

/// The named feature combinations, or an arbitrary schema.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Combo {
    C1,
    C2,
    C3,
    C4,
    C5,
    Custom(FeatureSchema),
}

impl Combo {
    pub const NAMED: [Combo; 5] = [Combo::C1, Combo::C2, Combo::C3, Combo::C4, Combo::C5];

    pub fn schema(&self) -> FeatureSchema {
        use FeatureColumn::*;
        let cols = match self {
            Combo::C1 => vec![Pitch, Velocity, Onset, Offset, Duration, Ioi, Otd],
            Combo::C2 => vec![Velocity, Onset, Offset, Duration, Ioi, Otd],
            Combo::C3 => vec![DevVelocity, DevOnset, DevOffset, DevDuration, DevIoi, DevOtd],
            Combo::C4 => vec![DevVelocity, DevDuration, DevIoi],
            Combo::C5 => FeatureColumn::ALL.to_vec(),
            Combo::Custom(s) => return s.clone(),
        };
        FeatureSchema(cols)
    }

    pub fn name(&self) -> String {
        match self {
            Combo::C1 => "C1".into(),
            Combo::C2 => "C2".into(),
            Combo::C3 => "C3".into(),
            Combo::C4 => "C4".into(),
            Combo::C5 => "C5".into(),
            Combo::Custom(s) => s.names().join("+"),
        }
    }
}

impl FromStr for Combo {
    type Err = FeatureError;

    /// Accepts `C1`..`C5` or a comma-separated list of column names.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "C1" => Ok(Combo::C1),
            "C2" => Ok(Combo::C2),
            "C3" => Ok(Combo::C3),
            "C4" => Ok(Combo::C4),
            "C5" => Ok(Combo::C5),
            _ if s.contains(',') || s.parse::<FeatureColumn>().is_ok() => {
                let names: Vec<&str> = s.split(',').map(str::trim).collect();
                Ok(Combo::Custom(FeatureSchema::parse_names(&names)?))
            }
            _ => Err(FeatureError::UnknownCombination(s.to_string())),
        }
    }
}

/// Per-note feature rows for one performance (or a segment of one).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    schema: FeatureSchema,
    /// Row-major, `rows × schema.len()`.
    data: Vec<f64>,
    pub label: String,
    pub piece_id: String,
}

impl FeatureMatrix {
    pub fn new(schema: FeatureSchema, data: Vec<f64>, label: impl Into<String>, piece_id: impl Into<String>) -> Result<Self, FeatureError> {
        let width = schema.len();
        if data.len() % width != 0 {
            return Err(FeatureError::SchemaMismatch(format!(
                "{} values do not divide into rows of {width}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite { row: i / width, column: schema.columns()[i % width].to_string() });
        }
        Ok(FeatureMatrix { schema, data, label: label.into(), piece_id: piece_id.into() })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.schema.len()
    }

    pub fn n_cols(&self) -> usize {
        self.schema.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.n_cols();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn column(&self, c: FeatureColumn) -> Option<Vec<f64>> {
        let j = self.schema.columns().iter().position(|&x| x == c)?;
        Some(self.data.iter().skip(j).step_by(self.n_cols()).copied().collect())
    }

    /// Projects onto `schema`, whose columns must all be present here.
    pub fn select(&self, schema: &FeatureSchema) -> Result<FeatureMatrix, FeatureError> {
        let idx = schema
            .columns()
            .iter()
            .map(|c| {
                self.schema
                    .columns()
                    .iter()
                    .position(|x| x == c)
                    .ok_or_else(|| FeatureError::SchemaMismatch(format!("column {c} not available")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut data = Vec::with_capacity(self.n_rows() * idx.len());
        for r in 0..self.n_rows() {
            let row = self.row(r);
            data.extend(idx.iter().map(|&j| row[j]));
        }
        Ok(FeatureMatrix { schema: schema.clone(), data, label: self.label.clone(), piece_id: self.piece_id.clone() })
    }

    /// Values converted to `f32`, row-major.
    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }
}

/// `[pitch, velocity, onset, offset, duration, ioi, otd]` of the performance
/// notes. The last note's IOI and OTD are zero.
pub fn note_features(pairs: &[(Note, Note)]) -> Result<Vec<[f64; 7]>, FeatureError> {
    if pairs.len() < 2 {
        return Err(FeatureError::TooFewNotes(pairs.len()));
    }
    let perf: Vec<Note> = pairs.iter().map(|p| p.0).collect();
    let (ioi, otd) = successor_intervals(&perf);
    Ok(perf
        .iter()
        .enumerate()
        .map(|(i, n)| {
            [f64::from(n.pitch), f64::from(n.velocity), n.onset, n.offset, n.duration(), ioi[i], otd[i]]
        })
        .collect())
}

fn successor_intervals(notes: &[Note]) -> (Vec<f64>, Vec<f64>) {
    let mut ioi = vec![0.0; notes.len()];
    let mut otd = vec![0.0; notes.len()];
    for i in 0..notes.len().saturating_sub(1) {
        ioi[i] = notes[i + 1].onset - notes[i].onset;
        otd[i] = notes[i + 1].onset - notes[i].offset;
    }
    (ioi, otd)
}

/// `[dev_velocity, dev_onset, dev_offset, dev_duration, dev_ioi, dev_otd]`.
/// Score times are first mapped into performance time by a least-squares
/// fit on matched onsets; intervals are scaled by the fitted tempo ratio.
pub fn deviation_features(pairs: &[(Note, Note)]) -> Result<Vec<[f64; 6]>, FeatureError> {
    if pairs.len() < 2 {
        return Err(FeatureError::TooFewNotes(pairs.len()));
    }
    let points: Vec<(f64, f64)> = pairs.iter().map(|(p, s)| (s.onset, p.onset)).collect();
    let map = least_squares(&points).ok_or(FeatureError::DegenerateFit)?;
    let perf: Vec<Note> = pairs.iter().map(|p| p.0).collect();
    let score: Vec<Note> = pairs.iter().map(|p| p.1).collect();
    let (p_ioi, p_otd) = successor_intervals(&perf);
    let (s_ioi, s_otd) = successor_intervals(&score);
    let a = map.scale;
    Ok((0..pairs.len())
        .map(|i| {
            let (p, s) = (&perf[i], &score[i]);
            [
                f64::from(p.velocity) - f64::from(s.velocity),
                p.onset - map.apply(s.onset),
                p.offset - map.apply(s.offset),
                p.duration() - a * s.duration(),
                p_ioi[i] - a * s_ioi[i],
                p_otd[i] - a * s_otd[i],
            ]
        })
        .collect())
}

/// Builds the feature matrix for one performance under a combination.
pub fn assemble(
    pairs: &[(Note, Note)],
    combo: &Combo,
    label: impl Into<String>,
    piece_id: impl Into<String>,
) -> Result<FeatureMatrix, FeatureError> {
    let schema = combo.schema();
    let base = note_features(pairs)?;
    let needs_dev = schema.columns().iter().any(|c| c.index() >= 7);
    let dev = if needs_dev { deviation_features(pairs)? } else { Vec::new() };
    let mut data = Vec::with_capacity(pairs.len() * schema.len());
    for i in 0..pairs.len() {
        for c in schema.columns() {
            let j = c.index();
            data.push(if j < 7 { base[i][j] } else { dev[i][j - 7] });
        }
    }
    FeatureMatrix::new(schema, data, label, piece_id)
}

/// Consecutive non-overlapping windows of exactly `length` rows; any
/// remainder is dropped.
pub fn segment(m: &FeatureMatrix, length: usize) -> Vec<FeatureMatrix> {
    assert!(length >= 2, "segment length must be at least 2");
    let w = m.n_cols();
    m.data
        .chunks_exact(length * w)
        .map(|chunk| FeatureMatrix {
            schema: m.schema.clone(),
            data: chunk.to_vec(),
            label: m.label.clone(),
            piece_id: m.piece_id.clone(),
        })
        .collect()
}

/// Per-column z-score statistics fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub columns: FeatureSchema,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fits population mean and standard deviation per column over all rows of
/// all matrices, accumulated left to right with Welford updates.
pub fn fit_normalizer(training: &[FeatureMatrix]) -> Result<Normalizer, FeatureError> {
    let first = training.first().ok_or(FeatureError::EmptyTrainingSet)?;
    let schema = first.schema.clone();
    let w = schema.len();
    let mut count = 0u64;
    let mut mean = vec![0.0; w];
    let mut m2 = vec![0.0; w];
    for m in training {
        if m.schema != schema {
            return Err(FeatureError::SchemaMismatch("training matrices disagree on schema".into()));
        }
        for row in m.data.chunks_exact(w) {
            count += 1;
            for j in 0..w {
                let delta = row[j] - mean[j];
                mean[j] += delta / count as f64;
                m2[j] += delta * (row[j] - mean[j]);
            }
        }
    }
    if count == 0 {
        return Err(FeatureError::EmptyTrainingSet);
    }
    let std = m2.iter().map(|&s| (s / count as f64).sqrt().max(STD_FLOOR)).collect();
    Ok(Normalizer { columns: schema, mean, std })
}

pub fn apply_normalizer(m: &FeatureMatrix, stats: &Normalizer) -> Result<FeatureMatrix, FeatureError> {
    if m.schema != stats.columns {
        return Err(FeatureError::SchemaMismatch(format!(
            "matrix columns {:?} vs normalizer {:?}",
            m.schema.names(),
            stats.columns.names()
        )));
    }
    let w = m.n_cols();
    let data = m
        .data
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - stats.mean[i % w]) / stats.std[i % w])
        .collect();
    Ok(FeatureMatrix { schema: m.schema.clone(), data, label: m.label.clone(), piece_id: m.piece_id.clone() })
}

/// JSON sidecar written next to a raw feature file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub columns: Vec<String>,
    pub rows: usize,
    pub label: String,
    pub piece_id: String,
    pub normalization: Option<Normalizer>,
}

/// Writes `<dir>/<name>.f32` (little-endian, row-major) and `<dir>/<name>.json`.
pub fn write_feature_file(dir: &Path, name: &str, m: &FeatureMatrix, normalization: Option<&Normalizer>) -> Result<(), FeatureError> {
    let sidecar = FeatureSidecar {
        columns: m.schema.names().into_iter().map(String::from).collect(),
        rows: m.n_rows(),
        label: m.label.clone(),
        piece_id: m.piece_id.clone(),
        normalization: normalization.cloned(),
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| FeatureError::File {
        path: dir.join(format!("{name}.json")),
        reason: e.to_string(),
    })?;
    fs::write(dir.join(format!("{name}.json")), json + "\n")?;
    let bytes: Vec<u8> = m.data.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    fs::write(dir.join(format!("{name}.f32")), bytes)?;
    Ok(())
}

/// Reads a feature file pair written by [`write_feature_file`].
pub fn read_feature_file(dir: &Path, name: &str) -> Result<(FeatureMatrix, FeatureSidecar), FeatureError> {
    let json_path = dir.join(format!("{name}.json"));
    let bad = |path: &Path, reason: String| FeatureError::File { path: path.to_path_buf(), reason };
    let sidecar: FeatureSidecar =
        serde_json::from_slice(&fs::read(&json_path)?).map_err(|e| bad(&json_path, e.to_string()))?;
    let schema = FeatureSchema::parse_names(&sidecar.columns)?;
    let bin_path = dir.join(format!("{name}.f32"));
    let bytes = fs::read(&bin_path)?;
    if bytes.len() != sidecar.rows * schema.len() * 4 {
        return Err(bad(&bin_path, format!("expected {} rows of {} columns", sidecar.rows, schema.len())));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect();
    let m = FeatureMatrix::new(schema, data, sidecar.label.clone(), sidecar.piece_id.clone())?;
    Ok((m, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(onset: f64, offset: f64, vel: u8) -> (Note, Note) {
        let n = Note::new(60, onset, offset, vel);
        (n, n)
    }

    fn sample_pairs(n: usize) -> Vec<(Note, Note)> {
        (0..n)
            .map(|i| {
                let s = Note::new(60 + (i % 5) as u8, i as f64 * 0.5, i as f64 * 0.5 + 0.3, 64);
                let p = Note::new(s.pitch, s.onset * 1.1 + 0.01 * (i % 3) as f64, s.offset * 1.1 + 0.05, 60 + (i % 9) as u8);
                (p, s)
            })
            .collect()
    }

    #[test]
    fn ioi_and_otd() {
        let f = note_features(&[pair(0.0, 0.4, 64), pair(0.5, 0.9, 64)]).unwrap();
        assert_eq!((f[0][5], f[1][5]), (0.5, 0.0));
        assert!((f[0][6] - 0.1).abs() < 1e-12 && f[1][6] == 0.0);

        let legato = note_features(&[pair(0.0, 0.6, 64), pair(0.5, 0.9, 64)]).unwrap();
        assert!((legato[0][6] + 0.1).abs() < 1e-12);

        let three = note_features(&[pair(0.0, 0.1, 64), pair(0.5, 0.6, 64), pair(1.25, 1.3, 64)]).unwrap();
        let ioi: Vec<f64> = three.iter().map(|r| r[5]).collect();
        assert_eq!(ioi, vec![0.5, 0.75, 0.0]);
    }

    #[test]
    fn too_few_notes() {
        assert!(matches!(note_features(&[pair(0.0, 0.1, 64)]), Err(FeatureError::TooFewNotes(1))));
        assert!(matches!(deviation_features(&[]), Err(FeatureError::TooFewNotes(0))));
    }

    #[test]
    fn identity_deviations_are_exactly_zero() {
        let pairs: Vec<_> = sample_pairs(20).into_iter().map(|(_, s)| (s, s)).collect();
        let dev = deviation_features(&pairs).unwrap();
        assert!(dev.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn twice_slower_has_no_onset_deviation() {
        let pairs: Vec<_> = sample_pairs(20)
            .into_iter()
            .map(|(_, s)| (Note::new(s.pitch, 2.0 * s.onset, 2.0 * s.offset, s.velocity), s))
            .collect();
        for row in deviation_features(&pairs).unwrap() {
            for v in row {
                assert!(v.abs() < 1e-12, "{row:?}");
            }
        }
    }

    #[test]
    fn accented_note() {
        let mut pairs: Vec<_> = sample_pairs(10).into_iter().map(|(_, s)| (s, s)).collect();
        pairs[4].0.velocity += 20;
        let dev = deviation_features(&pairs).unwrap();
        for (i, row) in dev.iter().enumerate() {
            assert_eq!(row[0], if i == 4 { 20.0 } else { 0.0 });
        }
    }

    #[test]
    fn degenerate_fit() {
        let s = Note::new(60, 1.0, 2.0, 64);
        let pairs = vec![(Note::new(60, 0.0, 1.0, 64), s), (Note::new(60, 1.0, 2.0, 64), s)];
        assert!(matches!(deviation_features(&pairs), Err(FeatureError::DegenerateFit)));
    }

    #[test]
    fn combo_columns() {
        let pairs = sample_pairs(12);
        let widths: Vec<usize> =
            Combo::NAMED.iter().map(|c| assemble(&pairs, c, "p", "x").unwrap().n_cols()).collect();
        assert_eq!(widths, vec![7, 6, 6, 3, 13]);
        assert_eq!(Combo::C4.schema().names(), vec!["dev_velocity", "dev_duration", "dev_ioi"]);
        assert!(Combo::C1.schema().columns().contains(&FeatureColumn::Pitch));
        assert!(!Combo::C2.schema().columns().contains(&FeatureColumn::Pitch));
        assert!(matches!("C9".parse::<Combo>(), Err(FeatureError::UnknownCombination(_))));
        assert_eq!("velocity, dev_ioi".parse::<Combo>().unwrap().schema().len(), 2);
    }

    #[test]
    fn select_matches_direct_assembly() {
        let pairs = sample_pairs(12);
        let full = assemble(&pairs, &Combo::C5, "p", "x").unwrap();
        for combo in Combo::NAMED {
            assert_eq!(full.select(&combo.schema()).unwrap(), assemble(&pairs, &combo, "p", "x").unwrap());
        }
    }

    #[test]
    fn schema_validation() {
        use FeatureColumn::*;
        assert!(FeatureSchema::new(vec![]).is_err());
        assert!(FeatureSchema::new(vec![Pitch, Pitch]).is_err());
        assert!("dev_pitch".parse::<FeatureColumn>().is_err());
    }

    fn matrix(rows: usize) -> FeatureMatrix {
        let data = (0..rows * 2).map(|v| v as f64).collect();
        FeatureMatrix::new(FeatureSchema::new(vec![FeatureColumn::Pitch, FeatureColumn::Ioi]).unwrap(), data, "a", "b")
            .unwrap()
    }

    #[test]
    fn segment_counts() {
        let counts: Vec<usize> = [2500, 1000, 999].iter().map(|&n| segment(&matrix(n), 1000).len()).collect();
        assert_eq!(counts, vec![2, 1, 0]);
        let segs = segment(&matrix(2500), 1000);
        assert_eq!(segs[1].row(0), matrix(2500).row(1000));
        assert!(segs.iter().all(|s| s.label == "a" && s.piece_id == "b" && s.n_rows() == 1000));
    }

    #[test]
    fn normalizer_edge_cases() {
        let schema = FeatureSchema::new(vec![FeatureColumn::Pitch, FeatureColumn::Velocity]).unwrap();
        let m = FeatureMatrix::new(schema, vec![5.0, -1.0, 5.0, 1.0, 5.0, -1.0, 5.0, 1.0], "a", "b").unwrap();
        let stats = fit_normalizer(std::slice::from_ref(&m)).unwrap();
        assert_eq!(stats.std[0], STD_FLOOR);
        let z = apply_normalizer(&m, &stats).unwrap();
        assert!(z.column(FeatureColumn::Pitch).unwrap().iter().all(|&v| v == 0.0));
        for (a, b) in z.column(FeatureColumn::Velocity).unwrap().iter().zip(m.column(FeatureColumn::Velocity).unwrap()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(matches!(fit_normalizer(&[]), Err(FeatureError::EmptyTrainingSet)));
    }

    #[test]
    fn non_finite_rejected() {
        let schema = FeatureSchema::new(vec![FeatureColumn::Pitch]).unwrap();
        assert!(matches!(FeatureMatrix::new(schema, vec![1.0, f64::NAN], "", ""), Err(FeatureError::NonFinite { row: 1, .. })));
    }

    #[test]
    fn feature_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let m = assemble(&sample_pairs(8), &Combo::C4, "pianist_1", "piece_3").unwrap();
        let stats = fit_normalizer(std::slice::from_ref(&m)).unwrap();
        write_feature_file(dir.path(), "x", &m, Some(&stats)).unwrap();
        let (back, sidecar) = read_feature_file(dir.path(), "x").unwrap();
        assert_eq!(sidecar.columns, vec!["dev_velocity", "dev_duration", "dev_ioi"]);
        assert_eq!(sidecar.normalization.as_ref(), Some(&stats));
        assert_eq!(back.n_rows(), 8);
        for (a, b) in back.data().iter().zip(m.data()) {
            assert_eq!(*a as f32, *b as f32);
        }
    }
}
