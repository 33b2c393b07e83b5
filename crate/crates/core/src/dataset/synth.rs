//! Synthetic performer-style corpus.
//!
//! Scores are random diatonic note streams; each pianist renders them through
//! a style transform (tempo curve, micro-timing jitter, dynamics bias,
//! articulation, wrong and dropped notes). Every random draw comes from a
//! ChaCha stream derived from the corpus seed and the item's indices, so a
//! corpus is byte-identical for equal seeds regardless of generation order.

use std::f64::consts::TAU;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DatasetError, PerformanceRecord, Registry};
use crate::midi::{write_midi, Note, NoteList};

/// Bundled six-style configuration used by the studies and acceptance runs.
pub const SHIPPED_STYLES: &str = include_str!("../../data/synth6.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreParams {
    pub min_notes: usize,
    pub max_notes: usize,
    /// Duration of one grid step (an eighth note) in seconds.
    pub grid_seconds: f64,
    /// Probability that a melody note carries a two-note chord.
    pub chord_probability: f64,
}

impl Default for ScoreParams {
    fn default() -> Self {
        ScoreParams { min_notes: 300, max_notes: 3000, grid_seconds: 0.25, chord_probability: 0.15 }
    }
}

/// How one pianist renders a score. The `take_*` fields are standard
/// deviations of per-performance draws around the pianist's values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StyleParams {
    pub name: String,
    /// Added to every score velocity.
    pub velocity_bias: f64,
    /// Per-note velocity noise.
    pub velocity_spread: f64,
    /// Relative amplitude of the sinusoidal tempo curve.
    pub tempo_amplitude: f64,
    /// Tempo curve period in score seconds.
    pub tempo_period: f64,
    /// Per-note onset noise in seconds.
    pub jitter_sigma: f64,
    /// Performed duration over notated duration.
    pub articulation_ratio: f64,
    /// Expected wrong notes inserted per score note.
    pub extra_rate: f64,
    /// Probability of dropping a score note.
    pub missing_rate: f64,
    /// Relative spread of each performance's overall tempo.
    #[serde(default)]
    pub tempo_scale_spread: f64,
    #[serde(default)]
    pub take_velocity_sd: f64,
    #[serde(default)]
    pub take_tempo_amplitude_sd: f64,
    #[serde(default)]
    pub take_articulation_sd: f64,
    /// Velocity added per octave above middle C (negative favours the bass).
    #[serde(default)]
    pub register_slope: f64,
    #[serde(default)]
    pub take_register_sd: f64,
}

impl StyleParams {
    /// Renders the score unchanged.
    pub fn identity(name: impl Into<String>) -> Self {
        StyleParams {
            name: name.into(),
            velocity_bias: 0.0,
            velocity_spread: 0.0,
            tempo_amplitude: 0.0,
            tempo_period: 10.0,
            jitter_sigma: 0.0,
            articulation_ratio: 1.0,
            extra_rate: 0.0,
            missing_rate: 0.0,
            tempo_scale_spread: 0.0,
            take_velocity_sd: 0.0,
            take_tempo_amplitude_sd: 0.0,
            take_articulation_sd: 0.0,
            register_slope: 0.0,
            take_register_sd: 0.0,
        }
    }

    fn validate(&self) -> Result<(), DatasetError> {
        let bad = |what: &str| Err(DatasetError::InvalidStyleConfig(format!("style {:?}: {what}", self.name)));
        let finite = [
            self.velocity_bias,
            self.velocity_spread,
            self.tempo_amplitude,
            self.tempo_period,
            self.jitter_sigma,
            self.articulation_ratio,
            self.extra_rate,
            self.missing_rate,
            self.tempo_scale_spread,
            self.take_velocity_sd,
            self.take_tempo_amplitude_sd,
            self.take_articulation_sd,
            self.register_slope,
            self.take_register_sd,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("non-finite parameter");
        }
        if self.name.trim().is_empty() || self.name.contains(['/', '\\']) {
            return bad("name must be a non-empty path component");
        }
        if [self.velocity_spread, self.jitter_sigma, self.tempo_scale_spread, self.take_velocity_sd, self.take_tempo_amplitude_sd, self.take_articulation_sd, self.take_register_sd]
            .iter()
            .any(|&v| v < 0.0)
        {
            return bad("spreads must be non-negative");
        }
        if !(0.0..1.0).contains(&self.tempo_amplitude) {
            return bad("tempo_amplitude must lie in [0, 1)");
        }
        if self.tempo_period <= 0.0 {
            return bad("tempo_period must be positive");
        }
        if self.articulation_ratio <= 0.0 {
            return bad("articulation_ratio must be positive");
        }
        if !(0.0..=1.0).contains(&self.extra_rate) || !(0.0..1.0).contains(&self.missing_rate) {
            return bad("extra_rate must lie in [0, 1] and missing_rate in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StyleConfig {
    #[serde(default)]
    pub score: ScoreParams,
    pub styles: Vec<StyleParams>,
}

impl StyleConfig {
    pub fn shipped() -> Self {
        serde_json::from_str(SHIPPED_STYLES).expect("bundled style config parses")
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        serde_json::from_str(text).map_err(|e| DatasetError::InvalidStyleConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let s = &self.score;
        if s.min_notes < 2 || s.max_notes < s.min_notes {
            return Err(DatasetError::InvalidStyleConfig("need 2 <= min_notes <= max_notes".into()));
        }
        if !(s.grid_seconds > 0.0 && s.grid_seconds.is_finite()) || !(0.0..=1.0).contains(&s.chord_probability) {
            return Err(DatasetError::InvalidStyleConfig("bad score parameters".into()));
        }
        for (i, st) in self.styles.iter().enumerate() {
            st.validate()?;
            if self.styles[..i].iter().any(|o| o.name == st.name) {
                return Err(DatasetError::InvalidStyleConfig(format!("duplicate style name {:?}", st.name)));
            }
        }
        Ok(())
    }
}

/// A generated corpus held in memory.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub registry: Registry,
    /// `(piece id, score)`.
    pub scores: Vec<(String, NoteList)>,
    /// Rendered performances, parallel to `registry.performances`.
    pub performances: Vec<NoteList>,
}

impl SynthCorpus {
    /// Every MIDI file of the corpus as `(relative path, bytes)`.
    pub fn files(&self) -> Vec<(PathBuf, Vec<u8>)> {
        let mut out: Vec<(PathBuf, Vec<u8>)> = self
            .scores
            .iter()
            .map(|(piece, notes)| (score_path(piece), write_midi(notes)))
            .collect();
        out.extend(
            self.registry
                .performances
                .iter()
                .zip(&self.performances)
                .map(|(r, notes)| (r.perf_midi.clone(), write_midi(notes))),
        );
        out
    }

    /// Writes the MIDI files and `registry.json` under `dir`.
    pub fn write_to(&self, dir: &std::path::Path) -> Result<(), DatasetError> {
        for (rel, bytes) in self.files() {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, bytes)?;
        }
        std::fs::write(dir.join("registry.json"), self.registry.to_json())?;
        Ok(())
    }
}

fn score_path(piece: &str) -> PathBuf {
    PathBuf::from("corpus").join("scores").join(format!("{piece}.mid"))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gauss(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sd).expect("finite sd").sample(rng)
    }
}

const MAJOR: [i32; 7] = [0, 2, 4, 5, 7, 9, 11];

fn diatonic_pitch(tonic: i32, degree: i32) -> u8 {
    let octave = degree.div_euclid(7);
    (tonic + 12 * octave + MAJOR[degree.rem_euclid(7) as usize]).clamp(21, 108) as u8
}

/// Random diatonic note stream with a melody, occasional dyads, and phrase
/// level dynamics. Notated durations fill the gap to the next onset.
pub fn generate_score(params: &ScoreParams, rng: &mut ChaCha8Rng) -> NoteList {
    let target = rng.gen_range(params.min_notes..=params.max_notes);
    let tonic = 48 + rng.gen_range(0..12);
    let mut degree: i32 = 7 + rng.gen_range(0..7);
    let mut t = 0.5;
    let mut level = 64.0;
    let mut notes = Vec::with_capacity(target);
    while notes.len() < target {
        if notes.len() % 16 == 0 {
            level = [48.0, 64.0, 80.0][rng.gen_range(0..3)];
        }
        let steps = [1.0, 1.0, 2.0, 2.0, 3.0, 4.0][rng.gen_range(0..6)];
        let dur = steps * params.grid_seconds;
        degree = (degree + rng.gen_range(-3..=3)).clamp(0, 21);
        let vel = (level + f64::from(rng.gen_range(-6..=6))).clamp(1.0, 127.0) as u8;
        notes.push(Note::new(diatonic_pitch(tonic, degree), t, t + dur, vel));
        if notes.len() < target && rng.gen_bool(params.chord_probability) {
            let below = diatonic_pitch(tonic, degree - [2, 4][rng.gen_range(0..2)]);
            notes.push(Note::new(below, t, t + dur, vel.saturating_sub(8).max(1)));
        }
        t += dur;
    }
    NoteList::from_notes(notes).expect("generated notes are valid")
}

/// Renders one performance of `score` in `style`.
pub fn render_performance(score: &NoteList, style: &StyleParams, rng: &mut ChaCha8Rng) -> NoteList {
    let tempo_scale = 1.0 + gauss(rng, style.tempo_scale_spread);
    let amplitude = (style.tempo_amplitude + gauss(rng, style.take_tempo_amplitude_sd)).clamp(0.0, 0.9);
    let articulation = (style.articulation_ratio + gauss(rng, style.take_articulation_sd)).max(0.05);
    let velocity_bias = style.velocity_bias + gauss(rng, style.take_velocity_sd);
    let register_slope = style.register_slope + gauss(rng, style.take_register_sd);
    let phase = if amplitude > 0.0 { rng.gen_range(0.0..TAU) } else { 0.0 };
    let omega = TAU / style.tempo_period;
    // Time warp whose derivative is tempo_scale·(1 + amplitude·sin(ωs + φ)).
    let warp = |s: f64| tempo_scale * (s + amplitude / omega * (phase.cos() - (omega * s + phase).cos()));
    let local = |s: f64| tempo_scale * (1.0 + amplitude * (omega * s + phase).sin());

    let mut notes = Vec::with_capacity(score.len());
    // Notes sharing a score onset share their timing error.
    let mut chord: Option<(f64, f64)> = None;
    for s in score.notes() {
        let jitter = match chord {
            Some((at, j)) if at == s.onset => j,
            _ => gauss(rng, style.jitter_sigma),
        };
        chord = Some((s.onset, jitter));
        if style.missing_rate > 0.0 && rng.gen_bool(style.missing_rate) {
            continue;
        }
        let onset = (warp(s.onset) + jitter).max(0.0);
        let duration = (s.duration() * articulation * local(s.onset)).max(0.03);
        let voicing = register_slope * (f64::from(s.pitch) - 60.0) / 12.0;
        let velocity = (f64::from(s.velocity) + velocity_bias + voicing + gauss(rng, style.velocity_spread))
            .round()
            .clamp(1.0, 127.0) as u8;
        notes.push(Note::new(s.pitch, onset, onset + duration, velocity));
        if style.extra_rate > 0.0 && rng.gen_bool(style.extra_rate) {
            let shift = rng.gen_range(1..=4) * if rng.gen_bool(0.5) { 1 } else { -1 };
            let pitch = (i32::from(s.pitch) + shift).clamp(0, 127) as u8;
            let at = onset + rng.gen_range(0.02..0.2);
            let vel = velocity.saturating_sub(10).max(1);
            notes.push(Note::new(pitch, at, at + 0.1, vel));
        }
    }
    NoteList::new(notes, score.ticks_per_quarter, score.tempo_map.clone()).expect("rendered notes are valid")
}

/// Generates `n_pieces` scores and `perf_per_cell` performances of each by
/// each of the first `n_pianists` styles.
pub fn synth_generate(
    config: &StyleConfig,
    n_pianists: usize,
    n_pieces: usize,
    perf_per_cell: usize,
    seed: u64,
) -> Result<SynthCorpus, DatasetError> {
    config.validate()?;
    if n_pianists < 2 {
        return Err(DatasetError::InvalidStyleConfig("need at least 2 pianists".into()));
    }
    if n_pianists > config.styles.len() {
        return Err(DatasetError::InvalidStyleConfig(format!(
            "{n_pianists} pianists requested but only {} styles configured",
            config.styles.len()
        )));
    }
    if n_pieces == 0 || perf_per_cell == 0 {
        return Err(DatasetError::InvalidStyleConfig("need at least one piece and one performance per cell".into()));
    }
    let styles = &config.styles[..n_pianists];
    let scores: Vec<(String, NoteList)> = (0..n_pieces)
        .map(|p| {
            let id = format!("piece_{p:03}");
            (id, generate_score(&config.score, &mut stream_rng(seed, p as u64)))
        })
        .collect();

    let mut records = Vec::new();
    let mut performances = Vec::new();
    for (pi, style) in styles.iter().enumerate() {
        for (ci, (piece, score)) in scores.iter().enumerate() {
            for take in 0..perf_per_cell {
                let stream = ((pi as u64 + 1) << 40) | ((ci as u64) << 16) | take as u64;
                performances.push(render_performance(score, style, &mut stream_rng(seed, stream)));
                records.push(PerformanceRecord {
                    id: format!("{}-{piece}-{take}", style.name),
                    pianist: style.name.clone(),
                    composition: piece.clone(),
                    perf_midi: PathBuf::from("corpus").join(&style.name).join(format!("{piece}_{take}.mid")),
                    score_midi: score_path(piece),
                });
            }
        }
    }
    let provenance = serde_json::json!({
        "generator": "synthetic",
        "seed": seed,
        "n_pianists": n_pianists,
        "n_pieces": n_pieces,
        "perf_per_cell": perf_per_cell,
        "config": config,
    });
    Ok(SynthCorpus { registry: Registry::new(records, provenance)?, scores, performances })
}
