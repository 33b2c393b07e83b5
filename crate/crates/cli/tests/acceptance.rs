//! Acceptance checks, one PASS/FAIL line each. Criteria 7 to 9 train the
//! desk model on the shipped synthetic corpus and take several minutes.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use perfid::align::{align, align_with_map, alignment_cost, fit_time_map, info_loss, Alignment, TimeMap, SKIP_COST};
use perfid::dataset::{split, synth_generate, PerformanceRecord, Split, StyleConfig};
use perfid::experiment::{mean_std, run_experiment, Corpus, RunResult, SegmentLength, TrainConfig};
use perfid::features::{assemble, deviation_features, segment, Combo, FeatureMatrix};
use perfid::midi::{Note, NoteList};
use perfid::neural::gradcheck::{check_layer, Layer};
use perfid::neural::{param_count, ConvNet, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---- 1 ----

fn info_loss_oracle() -> Check {
    let a = Alignment { pairs: (0..85).map(|i| (i, i)).collect(), missing: vec![], extra: (85..100).collect() };
    let exact = info_loss(&a).map_err(|e| e.to_string())?;
    if exact != 15.0 {
        return Err(format!("n_e=15, n_p=100 gave {exact}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n_p = rng.gen_range(1..5000usize);
        let n_e = rng.gen_range(0..=n_p);
        let a = Alignment { pairs: (0..n_p - n_e).map(|i| (i, i)).collect(), missing: vec![], extra: (n_p - n_e..n_p).collect() };
        let got = info_loss(&a).map_err(|e| e.to_string())?;
        worst = worst.max((got - n_e as f64 / n_p as f64 * 100.0).abs());
    }
    ensure(worst <= 1e-12, format!("15.0 exact; max error {worst:.1e} over 1000 cases"))
}

// ---- 2 ----

fn record(id: String, pianist: String, composition: String) -> PerformanceRecord {
    PerformanceRecord {
        perf_midi: format!("{id}.mid").into(),
        score_midi: format!("{composition}.mid").into(),
        id,
        pianist,
        composition,
    }
}

fn random_registry(rng: &mut ChaCha8Rng) -> Vec<PerformanceRecord> {
    let mut out = Vec::new();
    for p in 0..rng.gen_range(1..5) {
        for c in 0..rng.gen_range(1..6) {
            let n = match rng.gen_range(0..4) {
                0 => rng.gen_range(0..3),
                1 => rng.gen_range(3..10),
                _ => rng.gen_range(0..30),
            };
            for k in 0..n {
                out.push(record(format!("p{p}-c{c}-{k}"), format!("p{p}"), format!("c{c}")));
            }
        }
    }
    out
}

fn split_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut groups_seen = 0;
    for case in 0..500 {
        let records = random_registry(&mut rng);
        let a = split(&records, rng.gen());
        if a.assignment.len() != records.len() {
            return Err(format!("case {case}: {} assigned for {} records", a.assignment.len(), records.len()));
        }
        let mut groups: BTreeMap<(&str, &str), [usize; 3]> = BTreeMap::new();
        for r in &records {
            let s = a.get(&r.id).ok_or_else(|| format!("case {case}: {} unassigned", r.id))?;
            groups.entry((&r.composition, &r.pianist)).or_default()[s as usize] += 1;
        }
        for (g, [train, valid, test]) in groups {
            let n = train + valid + test;
            let ok = match n {
                0 | 1 => train == n,
                2 => train == 1 && valid + test == 1,
                3..=9 => valid == 1 && test == 1,
                _ => {
                    let t = (0.8 * n as f64).round() as usize;
                    let v = (0.5 * (n - t) as f64).round() as usize;
                    (train, valid, test) == (t, v, n - t - v)
                }
            };
            if !ok {
                return Err(format!("case {case}, group {g:?} of {n}: {train}/{valid}/{test}"));
            }
            groups_seen += 1;
        }
        let total: usize = Split::ALL.iter().map(|&s| a.count(s)).sum();
        if total != records.len() {
            return Err(format!("case {case}: not a partition"));
        }
    }
    Ok(format!("500 registries, {groups_seen} groups"))
}

// ---- 3 ----

fn brute_force(perf: &[Note], score: &[Note], map: TimeMap) -> f64 {
    fn go(perf: &[Note], score: &[Note], map: TimeMap, i: usize, j: usize) -> f64 {
        if i == perf.len() {
            return (score.len() - j) as f64 * SKIP_COST;
        }
        let mut best = SKIP_COST + go(perf, score, map, i + 1, j);
        for k in j..score.len() {
            if score[k].pitch == perf[i].pitch {
                let c = (perf[i].onset - map.apply(score[k].onset)).abs()
                    + (k - j) as f64 * SKIP_COST
                    + go(perf, score, map, i + 1, k + 1);
                best = best.min(c);
            }
        }
        best
    }
    go(perf, score, map, 0, 0)
}

fn random_pair(rng: &mut ChaCha8Rng) -> (NoteList, NoteList) {
    let pitches = [60u8, 62, 64, 67];
    let mut t = 0.0;
    let mut score = Vec::new();
    for _ in 0..rng.gen_range(1..=10) {
        score.push(Note::new(pitches[rng.gen_range(0..pitches.len())], t, t + 0.3, 64));
        t += [0.0, 0.25, 0.5][rng.gen_range(0..3)];
    }
    let scale = rng.gen_range(0.7..1.4);
    let offset = rng.gen_range(0.0..2.0);
    let mut perf = Vec::new();
    for s in &score {
        if rng.gen_bool(0.85) {
            let on = (scale * s.onset + offset + rng.gen_range(-0.08..0.08f64)).max(0.0);
            perf.push(Note::new(s.pitch, on, on + 0.3, 70));
        }
    }
    for _ in 0..rng.gen_range(0..3) {
        let on = rng.gen_range(0.0..scale * t + offset + 0.5);
        perf.push(Note::new(pitches[rng.gen_range(0..pitches.len())], on, on + 0.2, 50));
    }
    perf.truncate(10);
    if perf.is_empty() {
        perf.push(Note::new(score[0].pitch, offset, offset + 0.3, 64));
    }
    (NoteList::from_notes(perf).unwrap(), NoteList::from_notes(score).unwrap())
}

fn alignment_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let (perf, score) = random_pair(&mut rng);
        let map = fit_time_map(perf.notes(), score.notes());
        let a = align_with_map(perf.notes(), score.notes(), map).map_err(|e| e.to_string())?;
        let dp = alignment_cost(&a, perf.notes(), score.notes(), map);
        worst = worst.max((dp - brute_force(perf.notes(), score.notes(), map)).abs());
        if worst > 1e-9 {
            return Err(format!("case {case}: DP cost differs from exhaustive minimum by {worst}"));
        }
        let same = align(&score, &score).map_err(|e| e.to_string())?;
        if !same.missing.is_empty() || !same.extra.is_empty() {
            return Err(format!("case {case}: identity left {} missing, {} extra", same.missing.len(), same.extra.len()));
        }
    }
    Ok(format!("200 cases, max |DP - exhaustive| {worst:.1e}; identity exact"))
}

// ---- 4 ----

fn random_pairs(rng: &mut ChaCha8Rng, n: usize) -> Vec<(Note, Note)> {
    let scale = rng.gen_range(0.6..1.6);
    let mut t = 0.0;
    (0..n)
        .map(|_| {
            t += rng.gen_range(0.0..0.6);
            let dur = rng.gen_range(0.05..1.5);
            let score = Note::new(rng.gen_range(21..109), t, t + dur, 64);
            let on = (scale * t + rng.gen_range(-0.05..0.05f64)).max(0.0);
            let perf = Note::new(score.pitch, on, on + scale * dur * rng.gen_range(0.7..1.2), rng.gen_range(1..128));
            (perf, score)
        })
        .collect()
}

fn feature_contracts() -> Check {
    let widths: Vec<usize> = Combo::NAMED.iter().map(|c| c.schema().len()).collect();
    if widths != [7, 6, 6, 3, 13] {
        return Err(format!("combo widths {widths:?}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for combo in &Combo::NAMED {
        let m = assemble(&random_pairs(&mut rng, 50), combo, "p", "x").map_err(|e| e.to_string())?;
        if m.n_cols() != combo.schema().len() {
            return Err(format!("{} assembled {} columns", combo.name(), m.n_cols()));
        }
    }
    for _ in 0..200 {
        let n = rng.gen_range(2..300);
        let pairs: Vec<(Note, Note)> = random_pairs(&mut rng, n).into_iter().map(|(_, s)| (s, s)).collect();
        let rows = deviation_features(&pairs).map_err(|e| e.to_string())?;
        if rows.iter().any(|r| r.iter().any(|&v| v != 0.0)) {
            return Err("identity performance gave a non-zero deviation".into());
        }
    }
    let schema = Combo::C4.schema();
    for _ in 0..1000 {
        let n = rng.gen_range(0..3000usize);
        let length = rng.gen_range(2..1200usize);
        let data: Vec<f64> = (0..n * 3).map(|v| v as f64).collect();
        let m = FeatureMatrix::new(schema.clone(), data.clone(), "p", "x").map_err(|e| e.to_string())?;
        let windows = segment(&m, length);
        let rows: usize = windows.iter().map(FeatureMatrix::n_rows).sum();
        let joined: Vec<f64> = windows.iter().flat_map(|w| w.data().to_vec()).collect();
        if windows.len() != n / length || rows != n / length * length || joined[..] != data[..joined.len()] {
            return Err(format!("segmenting N={n} with L={length} lost or reordered rows"));
        }
    }
    Ok("widths 7,6,6,3,13; identity zero; 1000 segment pairs".into())
}

// ---- 5 ----

fn gradient_suite() -> Check {
    let mut worst = (String::new(), 0.0f64);
    for (i, layer) in Layer::SUITE.iter().enumerate() {
        let r = check_layer(*layer, 20, 100 + i as u64).map_err(|e| e.to_string())?;
        if r.max_rel_error >= 1e-4 {
            return Err(format!("{}: relative error {:.2e}", layer.name(), r.max_rel_error));
        }
        if r.max_rel_error > worst.1 {
            worst = (layer.name(), r.max_rel_error);
        }
    }
    Ok(format!("{} layers x 20 shapes; worst {} {:.2e}", Layer::SUITE.len(), worst.0, worst.1))
}

// ---- 6 ----

fn parameter_count() -> Check {
    let config = ModelConfig::default();
    let closed = param_count(&config);
    let built = ConvNet::<f32>::new(config, 0).map_err(|e| e.to_string())?.param_count();
    ensure(
        closed == 5_757_190 && built == closed && (5_500_000..=6_800_000).contains(&closed),
        format!("closed form {closed}, instantiated {built}"),
    )
}

// ---- 7 to 9 ----

struct Runs {
    large: Corpus,
    small: Corpus,
    memo: BTreeMap<(&'static str, &'static str, u64), (RunResult, Duration)>,
}

impl Runs {
    fn new() -> Self {
        let styles = StyleConfig::shipped();
        let corpus = |pieces| Corpus::from_synth(&synth_generate(&styles, 6, pieces, 3, 0).unwrap(), 1).unwrap();
        Runs { large: corpus(40), small: corpus(16), memo: BTreeMap::new() }
    }

    /// A desk-model run at L=1000, 60 epochs, trained once per key.
    fn run(&mut self, corpus: &'static str, combo: &'static str, seed: u64) -> Result<(RunResult, Duration), String> {
        if let Some(hit) = self.memo.get(&(corpus, combo, seed)) {
            return Ok(hit.clone());
        }
        let config = TrainConfig {
            seed,
            combo: combo.parse().map_err(|e| format!("{e}"))?,
            length: SegmentLength::Notes(1000),
            epochs: 60,
            ..TrainConfig::desk()
        };
        let data = if corpus == "large" { &self.large } else { &self.small };
        let start = Instant::now();
        let out = run_experiment(data, &config).map_err(|e| format!("{corpus} {combo} seed {seed}: {e}"))?;
        let hit = (out.result, start.elapsed());
        self.memo.insert((corpus, combo, seed), hit.clone());
        Ok(hit)
    }

    fn accuracies(&mut self, corpus: &'static str, combo: &'static str, seeds: &[u64]) -> Result<(Vec<f64>, Duration), String> {
        let mut accs = Vec::new();
        let mut spent = Duration::ZERO;
        for &s in seeds {
            let (r, d) = self.run(corpus, combo, s)?;
            accs.push(segment_accuracy(&r)?);
            spent += d;
        }
        Ok((accs, spent))
    }
}

fn segment_accuracy(r: &RunResult) -> Result<f64, String> {
    r.test_segment.as_ref().map(|m| m.accuracy).ok_or_else(|| format!("seed {} has no segment metrics", r.seed))
}

fn end_to_end(runs: &mut Runs) -> Result<(String, Duration), String> {
    let mut seg = Vec::new();
    let mut piece = Vec::new();
    let mut spent = Duration::ZERO;
    for seed in 1..=3 {
        let (r, d) = runs.run("large", "C5", seed)?;
        seg.push(segment_accuracy(&r)?);
        piece.push(r.test_piece.accuracy);
        spent += d;
    }
    let (s, p) = (mean_std(&seg).mean, mean_std(&piece).mean);
    let detail = format!("segment {s:.3} (seeds {}), piece {p:.3}", fmt_list(&seg));
    let limit = Duration::from_secs(20 * 60);
    if s >= 0.80 && p >= s - 0.05 && spent <= limit {
        Ok((detail, spent))
    } else {
        Err(format!("{detail}; training {:.0} s of {} s allowed", spent.as_secs_f64(), limit.as_secs()))
    }
}

fn ablation(runs: &mut Runs) -> Result<(String, Duration), String> {
    let (c5, t5) = runs.accuracies("large", "C5", &[1, 2, 3])?;
    let (c4, t4) = runs.accuracies("large", "C4", &[1, 2, 3])?;
    let (m5, m4) = (mean_std(&c5).mean, mean_std(&c4).mean);
    let detail = format!("C5 {m5:.3} ({}), C4 {m4:.3} ({})", fmt_list(&c5), fmt_list(&c4));
    if m5 >= m4 {
        Ok((detail, t5 + t4))
    } else {
        Err(detail)
    }
}

fn split_sensitivity(runs: &mut Runs) -> Result<(String, Duration), String> {
    let seeds = [1, 2, 3, 4, 5];
    let (large, tl) = runs.accuracies("large", "C5", &seeds)?;
    let (small, ts) = runs.accuracies("small", "C5", &seeds)?;
    let (l, s) = (mean_std(&large), mean_std(&small));
    let spent = tl + ts;
    let limit = Duration::from_secs(45 * 60);
    let detail = format!(
        "large {} [{}], small {} [{}] ({} vs {} performances)",
        l,
        fmt_list(&large),
        s,
        fmt_list(&small),
        runs.large.performances.len(),
        runs.small.performances.len()
    );
    if l.std < s.std && spent <= limit {
        Ok((detail, spent))
    } else {
        Err(format!("{detail}; training {:.0} s of {} s allowed", spent.as_secs_f64(), limit.as_secs()))
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/")
}

// ---- 10 ----

fn perfid(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_perfid")).current_dir(dir).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

/// Every file under `dir` with its bytes, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    walkdir::WalkDir::new(dir)
        .into_iter()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().is_file())
        .map(|e| (e.path().strip_prefix(dir).unwrap().display().to_string(), std::fs::read(e.path()).unwrap()))
        .collect()
}

fn determinism() -> Check {
    let pipeline: &[&[&str]] = &[
        &["synth", "--pianists", "3", "--pieces", "3", "--seed", "5", "--out", "synth"],
        &["align", "--registry", "synth", "--threads", "2", "--out", "aligned"],
        &["extract", "--registry", "synth", "--combo", "C4", "--out", "features"],
        &["split", "--registry", "synth", "--seed", "7", "--out", "splits.csv"],
        &["train", "--corpus", "synth", "--splits", "splits.csv", "--seed", "7", "--epochs", "3", "--length", "200", "--out", "run"],
        &["eval", "--checkpoint", "run/checkpoint.pidc", "--corpus", "synth", "--level", "piece", "--out", "eval"],
        &["study", "--id", "study3", "--corpus", "synth", "--seeds", "1,2", "--epochs", "1", "--length", "200", "--threads", "2", "--out", "study"],
    ];
    let mut trees = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        for args in pipeline {
            perfid(dir.path(), args)?;
        }
        trees.push(snapshot(dir.path()));
    }
    let (a, b) = (&trees[0], &trees[1]);
    if a.keys().ne(b.keys()) {
        return Err("the two runs wrote different file sets".into());
    }
    let differing: Vec<&String> = a.iter().filter(|(k, v)| b[*k] != **v).map(|(k, _)| k).collect();
    let manifests = a.keys().filter(|k| k.ends_with("manifest.json")).count();
    ensure(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} commands, {} files ({manifests} manifests) byte-identical across re-runs", pipeline.len(), a.len())
        } else {
            format!("differing: {differing:?}")
        },
    )
}

fn main() {
    let mut runs = None;
    let mut failed = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Result<(String, Duration), String>| {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let wall = start.elapsed();
        let (tag, detail, spent) = match outcome {
            Ok((d, spent)) => ("PASS", d, spent.max(wall)),
            Err(d) => {
                failed += 1;
                ("FAIL", d, wall)
            }
        };
        println!("criterion {n:>2} {tag} [{:>7.1} s] {name}: {detail}", spent.as_secs_f64());
    };
    let timed = |limit: Duration, f: fn() -> Check| {
        move || {
            let start = Instant::now();
            let d = f()?;
            let t = start.elapsed();
            ensure(t <= limit, format!("{d}; {:.1} s of {} s allowed", t.as_secs_f64(), limit.as_secs_f64())).map(|d| (d, t))
        }
    };
    report(1, "information-loss oracle", &mut timed(Duration::from_secs(1), info_loss_oracle));
    report(2, "split invariants", &mut timed(Duration::from_secs(10), split_invariants));
    report(3, "alignment oracle", &mut timed(Duration::from_secs(30), alignment_oracle));
    report(4, "feature contracts", &mut timed(Duration::from_secs(5), feature_contracts));
    report(5, "gradient suite", &mut timed(Duration::from_secs(120), gradient_suite));
    report(6, "parameter count", &mut timed(Duration::from_secs(1), parameter_count));
    report(7, "end-to-end synthetic study", &mut || end_to_end(runs.get_or_insert_with(Runs::new)));
    report(8, "feature-ablation direction", &mut || ablation(runs.get_or_insert_with(Runs::new)));
    report(9, "split-sensitivity direction", &mut || split_sensitivity(runs.get_or_insert_with(Runs::new)));
    report(10, "determinism", &mut || determinism().map(|d| (d, Duration::ZERO)));
    if failed > 0 {
        println!("{failed} of 10 criteria failed");
        std::process::exit(1);
    }
    println!("all 10 criteria passed");
}
