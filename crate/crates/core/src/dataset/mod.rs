//! Performance registry and train/valid/test splitting.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod synth;

pub use synth::{synth_generate, ScoreParams, StyleConfig, StyleParams, SynthCorpus};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("duplicate performance id {0:?}")]
    DuplicateId(String),
    #[error("record {0:?} has an empty {1}")]
    EmptyField(String, &'static str),
    #[error("invalid style config: {0}")]
    InvalidStyleConfig(String),
    #[error("unknown split {0:?}")]
    UnknownSplit(String),
    #[error("split file line {line}: {reason}")]
    MalformedSplitFile { line: usize, reason: String },
    #[error("registry {path}: {reason}")]
    Registry { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One performance of a composition by a pianist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerformanceRecord {
    pub id: String,
    pub pianist: String,
    pub composition: String,
    /// Relative to the registry's directory.
    pub perf_midi: PathBuf,
    pub score_midi: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub performances: Vec<PerformanceRecord>,
    #[serde(default)]
    pub provenance: serde_json::Value,
}

impl Registry {
    pub fn new(performances: Vec<PerformanceRecord>, provenance: serde_json::Value) -> Result<Self, DatasetError> {
        let r = Registry { performances, provenance };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let mut seen = std::collections::HashSet::new();
        for p in &self.performances {
            for (value, field) in [(&p.id, "id"), (&p.pianist, "pianist"), (&p.composition, "composition")] {
                if value.trim().is_empty() {
                    return Err(DatasetError::EmptyField(p.id.clone(), field));
                }
            }
            if !seen.insert(p.id.as_str()) {
                return Err(DatasetError::DuplicateId(p.id.clone()));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let bytes = fs::read(path)?;
        let r: Registry = serde_json::from_slice(&bytes)
            .map_err(|e| DatasetError::Registry { path: path.to_path_buf(), reason: e.to_string() })?;
        r.validate()?;
        Ok(r)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("registry serializes") + "\n"
    }

    /// Sorted distinct pianist labels; a label's position is its class index.
    pub fn pianists(&self) -> Vec<String> {
        let mut v: Vec<String> = self.performances.iter().map(|p| p.pianist.clone()).collect();
        v.sort();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            _ => Err(DatasetError::UnknownSplit(s.to_string())),
        }
    }
}

/// Performance id → split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub assignment: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn get(&self, id: &str) -> Option<Split> {
        self.assignment.get(id).copied()
    }

    pub fn ids(&self, split: Split) -> impl Iterator<Item = &str> {
        self.assignment.iter().filter(move |(_, &s)| s == split).map(|(id, _)| id.as_str())
    }

    pub fn count(&self, split: Split) -> usize {
        self.assignment.values().filter(|&&s| s == split).count()
    }

    /// `id,pianist,composition,split` rows in registry order.
    pub fn to_csv(&self, records: &[PerformanceRecord]) -> String {
        let mut out = String::from("id,pianist,composition,split\n");
        for r in records {
            if let Some(s) = self.get(&r.id) {
                out.push_str(&format!("{},{},{},{}\n", csv_field(&r.id), csv_field(&r.pianist), csv_field(&r.composition), s));
            }
        }
        out
    }

    /// Reads a CSV written by [`SplitAssignment::to_csv`]. The seed is not
    /// part of the file and must be supplied.
    pub fn from_csv(text: &str, seed: u64) -> Result<Self, DatasetError> {
        let mut assignment = BTreeMap::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields = split_csv_line(line);
            if fields.len() != 4 {
                return Err(DatasetError::MalformedSplitFile { line: i + 1, reason: format!("expected 4 fields, got {}", fields.len()) });
            }
            assignment.insert(fields[0].clone(), fields[3].parse()?);
        }
        Ok(SplitAssignment { seed, assignment })
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = vec![String::new()];
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted && chars.peek() == Some(&'"') => {
                fields.last_mut().unwrap().push('"');
                chars.next();
            }
            '"' => quoted = !quoted,
            ',' if !quoted => fields.push(String::new()),
            _ => fields.last_mut().unwrap().push(c),
        }
    }
    fields
}

/// Shuffles `items` and splits off the first `round(r·n)` elements.
fn random_split<T>(mut items: Vec<T>, r: f64, rng: &mut ChaCha8Rng) -> (Vec<T>, Vec<T>) {
    items.shuffle(rng);
    let k = ((r * items.len() as f64).round() as usize).min(items.len());
    let rest = items.split_off(k);
    (items, rest)
}

/// Assigns every record to Train, Valid or Test, group by group over
/// (composition, pianist), so that any group of three or more performances
/// contributes to every split.
pub fn split(records: &[PerformanceRecord], seed: u64) -> SplitAssignment {
    let mut groups: BTreeMap<(&str, &str), Vec<&str>> = BTreeMap::new();
    for r in records {
        groups.entry((r.composition.as_str(), r.pianist.as_str())).or_default().push(r.id.as_str());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    let mut assign = |ids: Vec<&str>, s: Split| {
        for id in ids {
            assignment.insert(id.to_string(), s);
        }
    };
    for (_, mut ids) in groups {
        ids.sort_unstable();
        let n = ids.len();
        match n {
            0 | 1 => assign(ids, Split::Train),
            2 => {
                let (a, b) = random_split(ids, 1.0 / n as f64, &mut rng);
                let m: f64 = rng.gen();
                assign(b, Split::Train);
                assign(a, if m <= 0.5 { Split::Valid } else { Split::Test });
            }
            3..=9 => {
                let (a, b) = random_split(ids, 1.0 / n as f64, &mut rng);
                let (b, c) = random_split(b, 1.0 / (n - 1) as f64, &mut rng);
                assign(a, Split::Valid);
                assign(b, Split::Test);
                assign(c, Split::Train);
            }
            _ => {
                let (a, b) = random_split(ids, 4.0 / 5.0, &mut rng);
                let (b, c) = random_split(b, 0.5, &mut rng);
                assign(a, Split::Train);
                assign(b, Split::Valid);
                assign(c, Split::Test);
            }
        }
    }
    SplitAssignment { seed, assignment }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub pianist: String,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.valid + self.test
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub rows: Vec<SplitCounts>,
}

impl SplitStats {
    pub fn totals(&self) -> SplitCounts {
        self.rows.iter().fold(
            SplitCounts { pianist: "total".into(), train: 0, valid: 0, test: 0 },
            |mut acc, r| {
                acc.train += r.train;
                acc.valid += r.valid;
                acc.test += r.test;
                acc
            },
        )
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Pianist | Train | Valid | Test | Total |\n|---|---|---|---|---|\n");
        for r in self.rows.iter().chain(std::iter::once(&self.totals())) {
            out.push_str(&format!("| {} | {} | {} | {} | {} |\n", r.pianist, r.train, r.valid, r.test, r.total()));
        }
        out
    }
}

/// Per-pianist split counts. Records absent from the assignment are ignored.
pub fn split_stats(assignment: &SplitAssignment, records: &[PerformanceRecord]) -> SplitStats {
    let mut by_pianist: BTreeMap<&str, SplitCounts> = BTreeMap::new();
    for r in records {
        let Some(s) = assignment.get(&r.id) else { continue };
        let row = by_pianist.entry(&r.pianist).or_insert_with(|| SplitCounts {
            pianist: r.pianist.clone(),
            train: 0,
            valid: 0,
            test: 0,
        });
        match s {
            Split::Train => row.train += 1,
            Split::Valid => row.valid += 1,
            Split::Test => row.test += 1,
        }
    }
    SplitStats { rows: by_pianist.into_values().collect() }
}
