//! Command-line flags and the JSON config file they override.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use perfid::experiment::{Arch, SegmentLength, TrainConfig};
use perfid::features::Combo;
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "perfid", version, about = "Pianist identification from expressive MIDI performances")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Seed for every random choice (default 0)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-piece stages and repeated runs (default 1)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file or directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overwrite existing outputs
    #[arg(long, global = true)]
    pub force: bool,
    /// JSON config file; flags take precedence over its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory that relative paths are resolved against (default .)
    #[arg(long, global = true)]
    pub workdir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic corpus of scores and styled performances
    Synth(SynthArgs),
    /// Align performances to their scores and report information loss
    Align(AlignArgs),
    /// Extract feature matrices for every performance of a registry
    Extract(ExtractArgs),
    /// Assign performances to train/valid/test splits
    Split(SplitArgs),
    /// Train a classifier and score it on the test split
    Train(TrainArgs),
    /// Score a checkpoint on one split of a corpus
    Eval(EvalArgs),
    /// Run one of the three studies with repeated seeds
    Study(StudyArgs),
    /// Print the notes of a MIDI file
    Dump(DumpArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Number of pianists, at most the number of configured styles (default 6)
    #[arg(long)]
    pub pianists: Option<usize>,
    /// Number of pieces (default 40)
    #[arg(long)]
    pub pieces: Option<usize>,
    /// Performances per piece and pianist (default 3)
    #[arg(long)]
    pub takes: Option<usize>,
    /// Style file replacing the built-in six styles
    #[arg(long)]
    pub styles: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AlignArgs {
    /// Registry JSON (or its directory); aligns every performance
    #[arg(long, conflicts_with_all = ["perf", "score"])]
    pub registry: Option<PathBuf>,
    /// Performance MIDI file
    #[arg(long, requires = "score")]
    pub perf: Option<PathBuf>,
    /// Score MIDI file
    #[arg(long, requires = "perf")]
    pub score: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    /// Registry JSON (or its directory)
    #[arg(long)]
    pub registry: PathBuf,
    /// Feature combination: C1..C5 or a comma list of column names (default C5)
    #[arg(long)]
    pub combo: Option<String>,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    /// Registry JSON (or its directory)
    #[arg(long)]
    pub registry: PathBuf,
}

/// Training hyperparameters shared by `train` and `study`.
#[derive(Args, Debug, Clone, Default)]
pub struct TrainFlags {
    /// Feature combination: C1..C5 or a comma list of column names
    #[arg(long)]
    pub combo: Option<String>,
    /// Segment length in notes, or "full"
    #[arg(long)]
    pub length: Option<String>,
    /// Training epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// L2 weight decay
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Batch size
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Network width preset
    #[arg(long, value_enum)]
    pub arch: Option<ArchFlag>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchFlag {
    Full,
    Desk,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Corpus directory or registry JSON
    #[arg(long)]
    pub corpus: PathBuf,
    /// Split CSV from `perfid split`; by default the corpus is split with the seed
    #[arg(long)]
    pub splits: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelFlag {
    Segment,
    Piece,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitFlag {
    Train,
    Valid,
    Test,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint written by `perfid train`
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Corpus directory or registry JSON
    #[arg(long)]
    pub corpus: PathBuf,
    /// Split CSV; by default the corpus is split with the checkpoint's seed
    #[arg(long)]
    pub splits: Option<PathBuf>,
    /// Which split to score (default test)
    #[arg(long, value_enum)]
    pub split: Option<SplitFlag>,
    /// Score windows or whole pieces (default: as trained)
    #[arg(long, value_enum)]
    pub level: Option<LevelFlag>,
    /// Window length for segment level (default: as trained)
    #[arg(long)]
    pub length: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StudyId {
    #[value(name = "study1")]
    #[serde(rename = "study1")]
    Study1,
    #[value(name = "study2")]
    #[serde(rename = "study2")]
    Study2,
    #[value(name = "study3")]
    #[serde(rename = "study3")]
    Study3,
}

#[derive(Args, Debug)]
pub struct StudyArgs {
    /// study1 (segment lengths), study2 (feature combinations) or study3 (split seeds per corpus)
    #[arg(long, value_enum)]
    pub id: StudyId,
    /// Corpus directory or registry JSON; repeat for study3
    #[arg(long, required = true)]
    pub corpus: Vec<PathBuf>,
    /// Comma-separated run seeds (default 1,2,3,4,5)
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Args, Debug)]
pub struct DumpArgs {
    /// MIDI file
    #[arg(long)]
    pub midi: PathBuf,
}

/// Values a `--config` file may set. Every key is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub pianists: Option<usize>,
    pub pieces: Option<usize>,
    pub takes: Option<usize>,
    pub styles: Option<PathBuf>,
    pub combo: Option<String>,
    pub length: Option<LengthValue>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub batch_size: Option<usize>,
    pub arch: Option<ArchFlag>,
    pub seeds: Option<Vec<u64>>,
}

/// A segment length written as a number or as "full".
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LengthValue {
    Notes(usize),
    Text(String),
}

impl LengthValue {
    fn as_text(&self) -> String {
        match self {
            LengthValue::Notes(n) => n.to_string(),
            LengthValue::Text(s) => s.clone(),
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

pub fn parse_combo(s: &str) -> Result<Combo, String> {
    s.parse::<Combo>().map_err(|e| e.to_string())
}

/// Flags over file values over the desk defaults.
pub fn resolve_train(flags: &TrainFlags, file: &FileConfig, seed: u64) -> Result<TrainConfig, String> {
    let mut c = TrainConfig { seed, ..TrainConfig::desk() };
    if let Some(combo) = flags.combo.as_ref().or(file.combo.as_ref()) {
        c.combo = parse_combo(combo)?;
    }
    if let Some(length) = flags.length.clone().or_else(|| file.length.as_ref().map(LengthValue::as_text)) {
        c.length = length.parse::<SegmentLength>().map_err(|e| e.to_string())?;
    }
    if let Some(arch) = flags.arch.or(file.arch) {
        c.arch = match arch {
            ArchFlag::Full => Arch::Full,
            ArchFlag::Desk => Arch::Desk,
        };
    }
    c.epochs = flags.epochs.or(file.epochs).unwrap_or(c.epochs);
    c.lr = flags.lr.or(file.lr).unwrap_or(c.lr);
    c.weight_decay = flags.weight_decay.or(file.weight_decay).unwrap_or(c.weight_decay);
    c.batch_size = flags.batch_size.or(file.batch_size).unwrap_or(c.batch_size);
    c.validate().map_err(|e| e.to_string())?;
    Ok(c)
}
