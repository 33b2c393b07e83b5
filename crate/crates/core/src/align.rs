//! Score-to-performance note alignment.
//!
//! A global dynamic-programming alignment over onset-ordered note lists.
//! Notes may only be matched to notes of equal pitch; a match costs the
//! absolute onset difference after the score has been mapped into
//! performance time, and leaving a note unmatched costs [`SKIP_COST`].

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::midi::{Note, NoteList};

/// Penalty for a missing or extra note.
pub const SKIP_COST: f64 = 1.0;

/// Onset tolerance when resolving imported alignment rows to notes.
pub const IMPORT_TOLERANCE: f64 = 0.030;

const TSV_HEADER: &str = "perf_id\tperf_onset\tperf_pitch\tscore_id\tscore_onset\tscore_pitch";

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    #[error("cannot align an empty note list")]
    EmptyInput,
    #[error("alignment has no performance notes")]
    ZeroNotes,
    #[error("alignment index {index} out of bounds for {side} list of length {len}")]
    IndexMismatch { side: &'static str, index: usize, len: usize },
    #[error("line {line}: no note with pitch {pitch} within 30 ms of {onset}")]
    UnresolvableRow { line: usize, onset: f64, pitch: u8 },
    #[error("line {line}: {side} note {index} matched more than once")]
    DuplicateMatch { line: usize, side: &'static str, index: usize },
    #[error("line {line}: {reason}")]
    MalformedTable { line: usize, reason: String },
    #[error("invalid alignment: {0}")]
    InvalidAlignment(String),
}

/// Matched pairs plus the unmatched notes on each side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    /// `(perf_index, score_index)`, increasing on both sides.
    pub pairs: Vec<(usize, usize)>,
    /// Score notes with no performance counterpart.
    pub missing: Vec<usize>,
    /// Performance notes with no score counterpart.
    pub extra: Vec<usize>,
}

impl Alignment {
    /// Total performance notes, `|pairs| + |extra|`.
    pub fn n_p(&self) -> usize {
        self.pairs.len() + self.extra.len()
    }

    /// Extra-note count.
    pub fn n_e(&self) -> usize {
        self.extra.len()
    }

    /// Checks every structural invariant against the lists it was built from.
    pub fn validate(&self, perf: &[Note], score: &[Note]) -> Result<(), AlignError> {
        let invalid = |msg: String| Err(AlignError::InvalidAlignment(msg));
        let mut perf_seen = vec![false; perf.len()];
        let mut score_seen = vec![false; score.len()];
        let mark = |seen: &mut Vec<bool>, side: &'static str, i: usize| -> Result<(), AlignError> {
            match seen.get_mut(i) {
                None => Err(AlignError::IndexMismatch { side, index: i, len: seen.len() }),
                Some(true) => Err(AlignError::InvalidAlignment(format!("{side} index {i} used twice"))),
                Some(s) => {
                    *s = true;
                    Ok(())
                }
            }
        };
        for &(p, s) in &self.pairs {
            mark(&mut perf_seen, "performance", p)?;
            mark(&mut score_seen, "score", s)?;
            if perf[p].pitch != score[s].pitch {
                return invalid(format!("pair ({p}, {s}) has mismatched pitch"));
            }
        }
        for w in self.pairs.windows(2) {
            if !(w[0].0 < w[1].0 && w[0].1 < w[1].1) {
                return invalid(format!("pairs {:?} and {:?} are not monotonic", w[0], w[1]));
            }
        }
        for &p in &self.extra {
            mark(&mut perf_seen, "performance", p)?;
        }
        for &s in &self.missing {
            mark(&mut score_seen, "score", s)?;
        }
        if perf_seen.iter().any(|s| !s) {
            return invalid("performance indices not partitioned".into());
        }
        if score_seen.iter().any(|s| !s) {
            return invalid("score indices not partitioned".into());
        }
        Ok(())
    }
}

/// Affine map from score time to performance time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeMap {
    pub scale: f64,
    pub offset: f64,
}

impl TimeMap {
    pub const IDENTITY: TimeMap = TimeMap { scale: 1.0, offset: 0.0 };

    pub fn apply(&self, t: f64) -> f64 {
        self.scale * t + self.offset
    }
}

/// Ordinary least-squares fit of `y ≈ scale·x + offset`. `None` when fewer
/// than two points or all `x` coincide.
pub fn least_squares(points: &[(f64, f64)]) -> Option<TimeMap> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx <= 0.0 {
        return None;
    }
    let scale = sxy / sxx;
    Some(TimeMap { scale, offset: mean_y - scale * mean_x })
}

/// First and last onsets among notes whose pitch occurs in `other`, or of
/// all notes when none does.
fn span(notes: &[Note], other: &[Note]) -> (f64, f64) {
    let mut present = [false; 128];
    for n in other {
        present[usize::from(n.pitch)] = true;
    }
    let mut shared = notes.iter().filter(|n| present[usize::from(n.pitch)]);
    match (shared.next(), shared.last()) {
        (Some(a), b) => (a.onset, b.unwrap_or(a).onset),
        (None, _) => (notes[0].onset, notes[notes.len() - 1].onset),
    }
}

fn endpoint_map(perf: &[Note], score: &[Note]) -> TimeMap {
    let (p0, p1) = span(perf, score);
    let (s0, s1) = span(score, perf);
    let scale = if s1 > s0 && p1 > p0 { (p1 - p0) / (s1 - s0) } else { 1.0 };
    TimeMap { scale, offset: p0 - scale * s0 }
}

/// Greedy pre-match under `map`: each score note in order takes the unused
/// performance note of equal pitch whose onset is nearest its mapped onset,
/// if within `tolerance` seconds.
fn anchors(perf: &[Note], score: &[Note], map: TimeMap, tolerance: f64) -> Vec<(f64, f64)> {
    let mut used = vec![false; perf.len()];
    let mut out = Vec::new();
    for s in score {
        let t = map.apply(s.onset);
        let lo = perf.partition_point(|p| p.onset < t - tolerance);
        let best = perf[lo..]
            .iter()
            .enumerate()
            .take_while(|(_, p)| p.onset <= t + tolerance)
            .filter(|(i, p)| p.pitch == s.pitch && !used[lo + i])
            .min_by(|a, b| (a.1.onset - t).abs().total_cmp(&(b.1.onset - t).abs()));
        if let Some((i, p)) = best {
            used[lo + i] = true;
            out.push((s.onset, p.onset));
        }
    }
    out
}

/// Fits the score→performance time map by least squares over a greedy
/// pitch-anchored pre-match. The first pass starts from the map through the
/// first and last onsets of pitches both sides share, with a 2 s search
/// radius; the second re-anchors under the fitted map within 0.5 s. Falls
/// back to the endpoint map when too few anchors are found.
pub fn fit_time_map(perf: &[Note], score: &[Note]) -> TimeMap {
    let mut map = endpoint_map(perf, score);
    for tolerance in [2.0, 0.5] {
        match least_squares(&anchors(perf, score, map, tolerance)) {
            Some(m) if m.scale > 0.0 && m.scale.is_finite() => map = m,
            _ => break,
        }
    }
    map
}

/// Cost of matching a performance note to a score note under `map`, or
/// `None` if the pitches differ.
pub fn match_cost(perf: &Note, score: &Note, map: TimeMap) -> Option<f64> {
    (perf.pitch == score.pitch).then(|| (perf.onset - map.apply(score.onset)).abs())
}

/// Total cost of an alignment: summed match costs plus one skip penalty per
/// missing or extra note.
pub fn alignment_cost(a: &Alignment, perf: &[Note], score: &[Note], map: TimeMap) -> f64 {
    let matched: f64 = a
        .pairs
        .iter()
        .map(|&(p, s)| match_cost(&perf[p], &score[s], map).unwrap_or(f64::INFINITY))
        .sum();
    matched + SKIP_COST * (a.missing.len() + a.extra.len()) as f64
}

#[derive(Clone, Copy)]
#[repr(u8)]
enum Step {
    Match,
    Extra,
    Missing,
}

/// Minimum-cost monotonic alignment under a fixed time map.
pub fn align_with_map(perf: &[Note], score: &[Note], map: TimeMap) -> Result<Alignment, AlignError> {
    if perf.is_empty() || score.is_empty() {
        return Err(AlignError::EmptyInput);
    }
    let (n, m) = (perf.len(), score.len());
    let mapped: Vec<f64> = score.iter().map(|s| map.apply(s.onset)).collect();
    let mut trace = vec![Step::Match; (n + 1) * (m + 1)];
    let mut prev: Vec<f64> = (0..=m).map(|j| j as f64 * SKIP_COST).collect();
    let mut cur = vec![0.0; m + 1];
    for j in 1..=m {
        trace[j] = Step::Missing;
    }
    for i in 1..=n {
        cur[0] = i as f64 * SKIP_COST;
        trace[i * (m + 1)] = Step::Extra;
        let p = &perf[i - 1];
        for j in 1..=m {
            let mut best = prev[j] + SKIP_COST;
            let mut step = Step::Extra;
            let missing = cur[j - 1] + SKIP_COST;
            if missing < best {
                best = missing;
                step = Step::Missing;
            }
            if p.pitch == score[j - 1].pitch {
                let matched = prev[j - 1] + (p.onset - mapped[j - 1]).abs();
                if matched <= best {
                    best = matched;
                    step = Step::Match;
                }
            }
            cur[j] = best;
            trace[i * (m + 1) + j] = step;
        }
        std::mem::swap(&mut prev, &mut cur);
    }

    let mut a = Alignment { pairs: Vec::new(), missing: Vec::new(), extra: Vec::new() };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        match trace[i * (m + 1) + j] {
            Step::Match => {
                a.pairs.push((i - 1, j - 1));
                i -= 1;
                j -= 1;
            }
            Step::Extra => {
                a.extra.push(i - 1);
                i -= 1;
            }
            Step::Missing => {
                a.missing.push(j - 1);
                j -= 1;
            }
        }
    }
    a.pairs.reverse();
    a.extra.reverse();
    a.missing.reverse();
    Ok(a)
}

/// Aligns a performance to its score.
pub fn align(perf: &NoteList, score: &NoteList) -> Result<Alignment, AlignError> {
    if perf.is_empty() || score.is_empty() {
        return Err(AlignError::EmptyInput);
    }
    let map = fit_time_map(perf.notes(), score.notes());
    align_with_map(perf.notes(), score.notes(), map)
}

/// Percentage of performance notes left unmatched.
pub fn info_loss(a: &Alignment) -> Result<f64, AlignError> {
    if a.n_p() == 0 {
        return Err(AlignError::ZeroNotes);
    }
    Ok(a.n_e() as f64 / a.n_p() as f64 * 100.0)
}

/// Matched `(performance, score)` note pairs in performance onset order.
pub fn filter_matched(a: &Alignment, perf: &NoteList, score: &NoteList) -> Result<Vec<(Note, Note)>, AlignError> {
    let (pn, sn) = (perf.notes(), score.notes());
    let mut pairs = a.pairs.clone();
    pairs.sort_unstable();
    pairs
        .into_iter()
        .map(|(p, s)| {
            let pn = pn.get(p).ok_or(AlignError::IndexMismatch { side: "performance", index: p, len: pn.len() })?;
            let sn = sn.get(s).ok_or(AlignError::IndexMismatch { side: "score", index: s, len: sn.len() })?;
            Ok((*pn, *sn))
        })
        .collect()
}

/// Writes the alignment table: one row per performance note, then the
/// missing score notes with `*` in the performance columns.
pub fn export_alignment(a: &Alignment, perf: &NoteList, score: &NoteList) -> Result<String, AlignError> {
    a.validate(perf.notes(), score.notes())?;
    let mut partner = vec![None; perf.len()];
    for &(p, s) in &a.pairs {
        partner[p] = Some(s);
    }
    let mut out = String::from(TSV_HEADER);
    out.push('\n');
    for (p, note) in perf.notes().iter().enumerate() {
        let _ = write!(out, "{p}\t{:.6}\t{}\t", note.onset, note.pitch);
        match partner[p] {
            Some(s) => {
                let sn = &score.notes()[s];
                let _ = writeln!(out, "{s}\t{:.6}\t{}", sn.onset, sn.pitch);
            }
            None => out.push_str("*\t*\t*\n"),
        }
    }
    for &s in &a.missing {
        let sn = &score.notes()[s];
        let _ = writeln!(out, "*\t*\t*\t{s}\t{:.6}\t{}", sn.onset, sn.pitch);
    }
    Ok(out)
}

fn resolve(notes: &[Note], onset: f64, pitch: u8, line: usize) -> Result<usize, AlignError> {
    notes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.pitch == pitch)
        .map(|(i, n)| (i, (n.onset - onset).abs()))
        .filter(|&(_, d)| d <= IMPORT_TOLERANCE)
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .ok_or(AlignError::UnresolvableRow { line, onset, pitch })
}

fn parse_side(fields: &[&str], line: usize) -> Result<Option<(f64, u8)>, AlignError> {
    let malformed = |reason: String| AlignError::MalformedTable { line, reason };
    if fields.iter().all(|f| *f == "*") {
        return Ok(None);
    }
    let onset = fields[1].parse::<f64>().map_err(|e| malformed(format!("onset {:?}: {e}", fields[1])))?;
    let pitch = fields[2].parse::<u8>().map_err(|e| malformed(format!("pitch {:?}: {e}", fields[2])))?;
    Ok(Some((onset, pitch)))
}

/// Reads an externally produced alignment table, resolving each row to notes
/// by pitch and onset (within 30 ms). Notes the table never mentions are
/// treated as unmatched.
pub fn import_alignment(table: &str, perf: &NoteList, score: &NoteList) -> Result<Alignment, AlignError> {
    let (pn, sn) = (perf.notes(), score.notes());
    let mut perf_used = vec![false; pn.len()];
    let mut score_used = vec![false; sn.len()];
    let mut pairs = Vec::new();
    let mut lines = table.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == TSV_HEADER => {}
        _ => return Err(AlignError::MalformedTable { line: 1, reason: "missing header".into() }),
    }
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 6 {
            return Err(AlignError::MalformedTable { line, reason: format!("expected 6 columns, got {}", fields.len()) });
        }
        let p = parse_side(&fields[0..3], line)?
            .map(|(onset, pitch)| resolve(pn, onset, pitch, line))
            .transpose()?;
        let s = parse_side(&fields[3..6], line)?
            .map(|(onset, pitch)| resolve(sn, onset, pitch, line))
            .transpose()?;
        for (side, index, used) in [("performance", p, &mut perf_used), ("score", s, &mut score_used)] {
            if let Some(i) = index {
                if std::mem::replace(&mut used[i], true) {
                    return Err(AlignError::DuplicateMatch { line, side, index: i });
                }
            }
        }
        if let (Some(p), Some(s)) = (p, s) {
            pairs.push((p, s));
        }
    }
    pairs.sort_unstable_by_key(|&(_, s)| s);
    let mut perf_matched = vec![false; pn.len()];
    let mut score_matched = vec![false; sn.len()];
    for &(p, s) in &pairs {
        perf_matched[p] = true;
        score_matched[s] = true;
    }
    let a = Alignment {
        pairs,
        extra: (0..pn.len()).filter(|&i| !perf_matched[i]).collect(),
        missing: (0..sn.len()).filter(|&i| !score_matched[i]).collect(),
    };
    a.validate(pn, sn)?;
    Ok(a)
}
