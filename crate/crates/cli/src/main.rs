mod args;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context as _};
use clap::Parser;
use perfid::align::{align, export_alignment, info_loss};
use perfid::dataset::{split, split_stats, synth_generate, Registry, Split, SplitAssignment, StyleConfig};
use perfid::experiment::{
    epoch_log_csv, evaluate, predictions_csv, run_on_split, study1, study2, study3, Corpus, ExperimentError, Level,
};
use perfid::features::write_feature_file;
use perfid::midi::{parse_midi, NoteList};
use perfid::neural::Checkpoint;
use rayon::prelude::*;
use serde_json::json;

use args::{Cli, Command, FileConfig, LevelFlag, SplitFlag, StudyId};
use manifest::{finish_dir, finish_file, RunManifest};

enum Failure {
    /// Bad flags or flag values: exit 2.
    Usage(String),
    /// The pipeline itself failed: exit 1.
    Pipeline(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Pipeline(e)
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        Failure::Pipeline(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Global settings after merging flags, config file and defaults.
struct Ctx {
    workdir: PathBuf,
    seed: u64,
    threads: usize,
    out: Option<PathBuf>,
    force: bool,
    file: FileConfig,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        self.workdir.join(p)
    }

    /// How an input is named in manifests: relative to the workdir.
    fn label(&self, p: &Path) -> String {
        p.strip_prefix(&self.workdir).unwrap_or(p).display().to_string()
    }

    fn out(&self) -> Result<PathBuf, Failure> {
        self.out.as_ref().map(|p| self.path(p)).ok_or_else(|| usage("--out is required for this command"))
    }

    /// Creates the output directory, refusing to reuse a non-empty one
    /// without `--force`. A forced run replaces a previous run's directory.
    fn out_dir(&self) -> Result<PathBuf, Failure> {
        let dir = self.out()?;
        if dir.is_file() {
            return Err(Failure::Pipeline(anyhow!("{} is a file, expected a directory", dir.display())));
        }
        let occupied = dir.read_dir().map(|mut d| d.next().is_some()).unwrap_or(false);
        if occupied {
            if !self.force {
                return Err(Failure::Pipeline(anyhow!("{} already exists; pass --force to overwrite", dir.display())));
            }
            if dir.join(manifest::MANIFEST).is_file() {
                std::fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
            }
        }
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    fn out_file(&self) -> Result<PathBuf, Failure> {
        let file = self.out()?;
        if file.is_dir() {
            return Err(Failure::Pipeline(anyhow!("{} is a directory, expected a file", file.display())));
        }
        if file.exists() && !self.force {
            return Err(Failure::Pipeline(anyhow!("{} already exists; pass --force to overwrite", file.display())));
        }
        if let Some(parent) = file.parent() {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        Ok(file)
    }

    fn pool(&self) -> anyhow::Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new().num_threads(self.threads).build().context("starting worker threads")
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(Failure::Pipeline(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let g = cli.global;
    let workdir = g.workdir.unwrap_or_else(|| PathBuf::from("."));
    let file = match &g.config {
        Some(p) => FileConfig::load(&workdir.join(p)).map_err(usage)?,
        None => FileConfig::default(),
    };
    let threads = g.threads.or(file.threads).unwrap_or(1);
    if threads == 0 {
        return Err(usage("--threads must be at least 1"));
    }
    let ctx = Ctx { seed: g.seed.or(file.seed).unwrap_or(0), threads, out: g.out, force: g.force, file, workdir };
    match cli.command {
        Command::Synth(a) => cmd_synth(&ctx, a),
        Command::Align(a) => cmd_align(&ctx, a),
        Command::Extract(a) => cmd_extract(&ctx, a),
        Command::Split(a) => cmd_split(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Study(a) => cmd_study(&ctx, a),
        Command::Dump(a) => cmd_dump(&ctx, a),
    }
}

/// A file name built from a performance id.
fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

fn registry_path(ctx: &Ctx, p: &Path) -> PathBuf {
    let p = ctx.path(p);
    if p.is_dir() {
        p.join("registry.json")
    } else {
        p
    }
}

fn load_registry(ctx: &Ctx, p: &Path) -> anyhow::Result<(Registry, PathBuf, PathBuf)> {
    let path = registry_path(ctx, p);
    let registry = Registry::load(&path).with_context(|| format!("loading {}", path.display()))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((registry, path, root))
}

/// Records the registry and every MIDI file it names as inputs.
fn hash_registry(ctx: &Ctx, m: &mut RunManifest, registry: &Registry, path: &Path, root: &Path) -> anyhow::Result<()> {
    m.input(ctx.label(path), path)?;
    let mut files: Vec<&Path> = registry.performances.iter().flat_map(|r| [r.perf_midi.as_path(), r.score_midi.as_path()]).collect();
    files.sort();
    files.dedup();
    for f in files {
        m.input(ctx.label(&root.join(f)), &root.join(f))?;
    }
    Ok(())
}

fn load_corpus(ctx: &Ctx, p: &Path, m: &mut RunManifest) -> anyhow::Result<Corpus> {
    let (registry, path, root) = load_registry(ctx, p)?;
    hash_registry(ctx, m, &registry, &path, &root)?;
    Ok(Corpus::from_registry(&registry, &root, ctx.threads).with_context(|| format!("building corpus from {}", path.display()))?)
}

fn read_midi(path: &Path) -> anyhow::Result<NoteList> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_midi(&bytes).with_context(|| format!("parsing {}", path.display()))?.notes)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn cmd_synth(ctx: &Ctx, a: args::SynthArgs) -> Outcome {
    let pianists = a.pianists.or(ctx.file.pianists).unwrap_or(6);
    let pieces = a.pieces.or(ctx.file.pieces).unwrap_or(40);
    let takes = a.takes.or(ctx.file.takes).unwrap_or(3);
    let styles_path = a.styles.or_else(|| ctx.file.styles.clone());
    let config = json!({ "pianists": pianists, "pieces": pieces, "takes": takes, "styles": styles_path, "seed": ctx.seed });
    let mut m = RunManifest::new("synth", config, vec![ctx.seed]);
    let styles = match &styles_path {
        Some(p) => {
            let p = ctx.path(p);
            let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            m.input(ctx.label(&p), &p)?;
            StyleConfig::from_json(&text).with_context(|| format!("style file {}", p.display()))?
        }
        None => StyleConfig::shipped(),
    };
    let corpus = synth_generate(&styles, pianists, pieces, takes, ctx.seed).map_err(|e| usage(e.to_string()))?;
    let out = ctx.out_dir()?;
    corpus.write_to(&out).with_context(|| format!("writing corpus to {}", out.display()))?;
    write(&out.join("styles.json"), to_json(&styles))?;
    finish_dir(m, &out)?;
    println!("{} performances of {} pieces by {} pianists in {}", corpus.performances.len(), pieces, pianists, out.display());
    Ok(())
}

fn cmd_align(ctx: &Ctx, a: args::AlignArgs) -> Outcome {
    let pairs: Vec<(String, PathBuf, PathBuf)>;
    let mut m;
    if let Some(reg) = &a.registry {
        let (registry, path, root) = load_registry(ctx, reg)?;
        m = RunManifest::new("align", json!({ "registry": reg }), vec![]);
        hash_registry(ctx, &mut m, &registry, &path, &root)?;
        pairs = registry.performances.iter().map(|r| (r.id.clone(), root.join(&r.perf_midi), root.join(&r.score_midi))).collect();
    } else {
        let (Some(perf), Some(score)) = (&a.perf, &a.score) else {
            return Err(usage("give --registry, or --perf together with --score"));
        };
        m = RunManifest::new("align", json!({ "perf": perf, "score": score }), vec![]);
        let (perf, score) = (ctx.path(perf), ctx.path(score));
        m.input(ctx.label(&perf), &perf)?;
        m.input(ctx.label(&score), &score)?;
        let id = perf.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "perf".into());
        pairs = vec![(id, perf, score)];
    }
    let out = ctx.out_dir()?;
    let tables = ctx.pool()?.install(|| {
        pairs
            .par_iter()
            .map(|(id, perf, score)| -> anyhow::Result<(String, String)> {
                let (p, s) = (read_midi(perf)?, read_midi(score)?);
                let alignment = align(&p, &s).with_context(|| format!("{id}: aligning {}", perf.display()))?;
                let loss = info_loss(&alignment).with_context(|| id.clone())?;
                let row = format!("{},{},{},{:.6}", csv_field(id), alignment.n_p(), alignment.n_e(), loss);
                Ok((export_alignment(&alignment, &p, &s).with_context(|| id.clone())?, row))
            })
            .collect::<Vec<_>>()
    });
    std::fs::create_dir_all(out.join("alignments")).context("creating alignments directory")?;
    let mut summary = String::from("id,n_p,n_e,info_loss\n");
    for ((id, _, _), t) in pairs.iter().zip(tables) {
        let (table, row) = t?;
        write(&out.join("alignments").join(format!("{}.tsv", file_stem(id))), table)?;
        summary.push_str(&row);
        summary.push('\n');
    }
    write(&out.join("info_loss.csv"), &summary)?;
    finish_dir(m, &out)?;
    println!("aligned {} performances into {}", pairs.len(), out.display());
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cmd_extract(ctx: &Ctx, a: args::ExtractArgs) -> Outcome {
    let combo_text = a.combo.or_else(|| ctx.file.combo.clone()).unwrap_or_else(|| "C5".into());
    let combo = args::parse_combo(&combo_text).map_err(usage)?;
    let mut m = RunManifest::new("extract", json!({ "registry": a.registry, "combo": combo.name() }), vec![]);
    let corpus = load_corpus(ctx, &a.registry, &mut m)?;
    let out = ctx.out_dir()?;
    let dir = out.join("features");
    std::fs::create_dir_all(&dir).context("creating features directory")?;
    let schema = combo.schema();
    let mut summary = String::from("id,pianist,rows,info_loss\n");
    for p in &corpus.performances {
        let selected = p.features.select(&schema).with_context(|| p.record.id.clone())?;
        write_feature_file(&dir, &file_stem(&p.record.id), &selected, None).with_context(|| p.record.id.clone())?;
        summary.push_str(&format!(
            "{},{},{},{:.6}\n",
            csv_field(&p.record.id),
            csv_field(&p.record.pianist),
            selected.n_rows(),
            p.info_loss
        ));
    }
    write(&out.join("features.csv"), &summary)?;
    finish_dir(m, &out)?;
    println!("{} feature files with {} columns in {}", corpus.performances.len(), schema.len(), dir.display());
    Ok(())
}

fn cmd_split(ctx: &Ctx, a: args::SplitArgs) -> Outcome {
    let (registry, path, _) = load_registry(ctx, &a.registry)?;
    let mut m = RunManifest::new("split", json!({ "registry": a.registry, "seed": ctx.seed }), vec![ctx.seed]);
    m.input(ctx.label(&path), &path)?;
    let assignment = split(&registry.performances, ctx.seed);
    let out = ctx.out_file()?;
    write(&out, assignment.to_csv(&registry.performances))?;
    finish_file(m, &out)?;
    print!("{}", split_stats(&assignment, &registry.performances).to_markdown());
    Ok(())
}

fn read_splits(ctx: &Ctx, p: &Path, seed: u64, m: &mut RunManifest) -> anyhow::Result<SplitAssignment> {
    let p = ctx.path(p);
    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
    m.input(ctx.label(&p), &p)?;
    SplitAssignment::from_csv(&text, seed).with_context(|| format!("split file {}", p.display()))
}

fn cmd_train(ctx: &Ctx, a: args::TrainArgs) -> Outcome {
    let config = args::resolve_train(&a.train, &ctx.file, ctx.seed).map_err(usage)?;
    let mut m = RunManifest::new(
        "train",
        json!({ "corpus": a.corpus, "splits": a.splits, "train": config }),
        vec![config.seed],
    );
    let corpus = load_corpus(ctx, &a.corpus, &mut m)?;
    let assignment = match &a.splits {
        Some(p) => read_splits(ctx, p, config.seed, &mut m)?,
        None => split(&corpus.records(), config.seed),
    };
    let out = ctx.out_dir()?;
    let run = run_on_split(&corpus, &config, &assignment)?;
    write(&out.join("checkpoint.pidc"), run.checkpoint.to_bytes())?;
    write(&out.join("epoch_log.csv"), epoch_log_csv(&run.result.log)?)?;
    write(&out.join("predictions.csv"), predictions_csv(&run.predictions, &corpus.classes)?)?;
    write(&out.join("result.json"), to_json(&run.result))?;
    write(&out.join("splits.csv"), assignment.to_csv(&corpus.records()))?;
    finish_dir(m, &out)?;
    let h = run.result.headline();
    println!(
        "best epoch {}; test accuracy {:.3}, macro-F1 {:.3}; piece accuracy {:.3}",
        run.result.best_epoch, h.accuracy, h.macro_f1, run.result.test_piece.accuracy
    );
    Ok(())
}

fn cmd_eval(ctx: &Ctx, a: args::EvalArgs) -> Outcome {
    let ckpt_path = ctx.path(&a.checkpoint);
    let checkpoint = Checkpoint::load(&ckpt_path).with_context(|| format!("loading {}", ckpt_path.display()))?;
    let which = match a.split.unwrap_or(SplitFlag::Test) {
        SplitFlag::Train => Split::Train,
        SplitFlag::Valid => Split::Valid,
        SplitFlag::Test => Split::Test,
    };
    let level = match (a.level, a.length.or(checkpoint.header.segment_length)) {
        (Some(LevelFlag::Piece), _) | (None, None) => Level::Piece,
        (_, Some(n)) if n >= 2 => Level::Segment(n),
        (_, Some(n)) => return Err(usage(format!("segment length {n} is below 2"))),
        (Some(LevelFlag::Segment), None) => return Err(usage("--level segment needs --length for a whole-piece checkpoint")),
    };
    let level_json = match level {
        Level::Piece => json!("piece"),
        Level::Segment(n) => json!(n),
    };
    let mut m = RunManifest::new(
        "eval",
        json!({ "checkpoint": a.checkpoint, "corpus": a.corpus, "splits": a.splits, "split": which, "level": level_json }),
        vec![checkpoint.header.seed],
    );
    m.input(ctx.label(&ckpt_path), &ckpt_path)?;
    let corpus = load_corpus(ctx, &a.corpus, &mut m)?;
    let assignment = match &a.splits {
        Some(p) => read_splits(ctx, p, checkpoint.header.seed, &mut m)?,
        None => split(&corpus.records(), checkpoint.header.seed),
    };
    let ids: Vec<&str> = corpus.in_split(&assignment, which).map(|p| p.record.id.as_str()).collect();
    if ids.is_empty() {
        return Err(Failure::Pipeline(anyhow!("the {which} split of {} is empty", a.corpus.display())));
    }
    let out = ctx.out_dir()?;
    let eval = evaluate(&checkpoint, &corpus, &ids, level)?;
    write(&out.join("metrics.json"), to_json(&json!({ "metrics": eval.metrics, "majority": eval.majority, "mean_loss": eval.mean_loss })))?;
    write(&out.join("predictions.csv"), predictions_csv(&eval.predictions, &checkpoint.header.classes)?)?;
    finish_dir(m, &out)?;
    println!("{} items: accuracy {:.3}, macro-F1 {:.3}", eval.metrics.n_eval, eval.metrics.accuracy, eval.metrics.macro_f1);
    Ok(())
}

fn cmd_study(ctx: &Ctx, a: args::StudyArgs) -> Outcome {
    let base = args::resolve_train(&a.train, &ctx.file, ctx.seed).map_err(usage)?;
    let seeds = a.seeds.clone().or_else(|| ctx.file.seeds.clone()).unwrap_or_else(|| vec![1, 2, 3, 4, 5]);
    if seeds.len() < 2 {
        return Err(usage("--seeds needs at least two seeds"));
    }
    if a.id != StudyId::Study3 && a.corpus.len() != 1 {
        return Err(usage("study1 and study2 take exactly one --corpus"));
    }
    let mut m = RunManifest::new("study", json!({ "id": a.id, "corpus": a.corpus, "train": base }), seeds.clone());
    let mut corpora = Vec::new();
    for p in &a.corpus {
        let name = registry_path(ctx, p)
            .parent()
            .and_then(Path::file_name)
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| p.display().to_string());
        corpora.push((name, load_corpus(ctx, p, &mut m)?));
    }
    let out = ctx.out_dir()?;
    let report = match a.id {
        StudyId::Study1 => study1(&corpora[0].1, &base, &seeds, ctx.threads)?,
        StudyId::Study2 => study2(&corpora[0].1, &base, &seeds, ctx.threads)?,
        StudyId::Study3 => {
            let named: Vec<(&str, &Corpus)> = corpora.iter().map(|(n, c)| (n.as_str(), c)).collect();
            study3(&named, &base, &seeds, ctx.threads)?
        }
    };
    let markdown = report.to_markdown();
    write(&out.join("report.md"), &markdown)?;
    write(&out.join("runs.csv"), report.runs_csv()?)?;
    write(&out.join("report.json"), to_json(&report))?;
    finish_dir(m, &out)?;
    print!("{markdown}");
    Ok(())
}

fn cmd_dump(ctx: &Ctx, a: args::DumpArgs) -> Outcome {
    let path = ctx.path(&a.midi);
    let notes = read_midi(&path)?;
    match &ctx.out {
        None => print!("{}", notes.dump()),
        Some(_) => {
            let mut m = RunManifest::new("dump", json!({ "midi": a.midi }), vec![]);
            m.input(ctx.label(&path), &path)?;
            let out = ctx.out_file()?;
            write(&out, notes.dump())?;
            finish_file(m, &out)?;
        }
    }
    Ok(())
}
