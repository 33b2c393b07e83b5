//! Standard MIDI File ingestion.
//!
//! Parses SMF format 0 and 1 files into a single merged [`NoteList`] with
//! absolute times in seconds, and writes note lists back out as format 0
//! files (used by the synthetic corpus generator and round-trip tests).

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default tempo when a file carries no tempo meta event (120 bpm).
pub const DEFAULT_TEMPO: u32 = 500_000;

#[derive(Debug, Error, PartialEq)]
pub enum MidiError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed track {track}: {reason}")]
    MalformedTrack { track: usize, reason: String },
    #[error("invalid note: {0}")]
    InvalidNote(String),
}

/// One sounded event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub pitch: u8,
    /// Seconds.
    pub onset: f64,
    /// Seconds, strictly after `onset`.
    pub offset: f64,
    pub velocity: u8,
    pub channel: u8,
}

impl Note {
    pub fn new(pitch: u8, onset: f64, offset: f64, velocity: u8) -> Self {
        Note { pitch, onset, offset, velocity, channel: 0 }
    }

    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }

    pub fn validate(&self) -> Result<(), MidiError> {
        if self.pitch > 127 {
            return Err(MidiError::InvalidNote(format!("pitch {} out of range", self.pitch)));
        }
        if !(1..=127).contains(&self.velocity) {
            return Err(MidiError::InvalidNote(format!("velocity {} out of range", self.velocity)));
        }
        if self.channel > 15 {
            return Err(MidiError::InvalidNote(format!("channel {} out of range", self.channel)));
        }
        if !(self.onset.is_finite() && self.offset.is_finite()) || self.onset < 0.0 {
            return Err(MidiError::InvalidNote(format!("bad onset {}", self.onset)));
        }
        if self.offset <= self.onset {
            return Err(MidiError::InvalidNote(format!(
                "offset {} not after onset {}",
                self.offset, self.onset
            )));
        }
        Ok(())
    }
}

/// Total order used for note lists: onset, then pitch, then channel.
pub fn note_order(a: &Note, b: &Note) -> std::cmp::Ordering {
    a.onset
        .total_cmp(&b.onset)
        .then(a.pitch.cmp(&b.pitch))
        .then(a.channel.cmp(&b.channel))
}

/// Tempo change: tick position and microseconds per quarter note.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TempoChange {
    pub tick: u64,
    pub micros_per_quarter: u32,
}

/// Piecewise-constant tempo map, always starting at tick 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TempoMap {
    changes: Vec<TempoChange>,
}

impl Default for TempoMap {
    fn default() -> Self {
        TempoMap { changes: vec![TempoChange { tick: 0, micros_per_quarter: DEFAULT_TEMPO }] }
    }
}

impl TempoMap {
    /// Builds a map from unordered changes. Later entries at an equal tick win;
    /// a default entry is inserted at tick 0 when none is given.
    pub fn from_changes(changes: impl IntoIterator<Item = TempoChange>) -> Self {
        let mut by_tick: BTreeMap<u64, u32> = BTreeMap::new();
        for c in changes {
            by_tick.insert(c.tick, c.micros_per_quarter);
        }
        by_tick.entry(0).or_insert(DEFAULT_TEMPO);
        TempoMap {
            changes: by_tick
                .into_iter()
                .map(|(tick, micros_per_quarter)| TempoChange { tick, micros_per_quarter })
                .collect(),
        }
    }

    pub fn changes(&self) -> &[TempoChange] {
        &self.changes
    }

    pub fn tick_to_seconds(&self, tick: u64, ticks_per_quarter: u16) -> f64 {
        let tpq = f64::from(ticks_per_quarter);
        let mut seconds = 0.0;
        for (i, change) in self.changes.iter().enumerate() {
            if change.tick >= tick {
                break;
            }
            let end = self.changes.get(i + 1).map_or(tick, |next| next.tick.min(tick));
            seconds += (end - change.tick) as f64 * f64::from(change.micros_per_quarter) / 1e6 / tpq;
        }
        seconds
    }

    pub fn seconds_to_tick(&self, seconds: f64, ticks_per_quarter: u16) -> u64 {
        let tpq = f64::from(ticks_per_quarter);
        let mut elapsed = 0.0;
        for (i, change) in self.changes.iter().enumerate() {
            let sec_per_tick = f64::from(change.micros_per_quarter) / 1e6 / tpq;
            if let Some(next) = self.changes.get(i + 1) {
                let span = (next.tick - change.tick) as f64 * sec_per_tick;
                if seconds < elapsed + span {
                    return change.tick + ((seconds - elapsed) / sec_per_tick).round() as u64;
                }
                elapsed += span;
            } else {
                return change.tick + ((seconds - elapsed).max(0.0) / sec_per_tick).round() as u64;
            }
        }
        unreachable!("tempo map always has an entry at tick 0")
    }
}

/// An ordered note stream merged from all tracks of a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteList {
    notes: Vec<Note>,
    pub ticks_per_quarter: u16,
    pub tempo_map: TempoMap,
}

impl NoteList {
    /// Sorts `notes` into canonical order. Fails if any note is invalid.
    pub fn new(mut notes: Vec<Note>, ticks_per_quarter: u16, tempo_map: TempoMap) -> Result<Self, MidiError> {
        if ticks_per_quarter == 0 {
            return Err(MidiError::MalformedHeader("ticks per quarter is zero".into()));
        }
        for n in &notes {
            n.validate()?;
        }
        notes.sort_by(note_order);
        Ok(NoteList { notes, ticks_per_quarter, tempo_map })
    }

    /// Note list with 960 ticks per quarter at the default tempo.
    pub fn from_notes(notes: Vec<Note>) -> Result<Self, MidiError> {
        Self::new(notes, 960, TempoMap::default())
    }

    pub fn notes(&self) -> &[Note] {
        &self.notes
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    /// Debug dump: `pitch<TAB>onset<TAB>offset<TAB>velocity`, one note per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for n in &self.notes {
            let _ = writeln!(out, "{}\t{:.6}\t{:.6}\t{}", n.pitch, n.onset, n.offset, n.velocity);
        }
        out
    }
}

/// Non-fatal conditions encountered while parsing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseWarnings {
    /// Note-ons never switched off; closed at the end of their track.
    pub unterminated_notes: usize,
    /// Pairs whose on and off fell on the same tick.
    pub zero_length_notes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedMidi {
    pub notes: NoteList,
    pub warnings: ParseWarnings,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn u8(&mut self) -> Option<u8> {
        let b = *self.bytes.get(self.pos)?;
        self.pos += 1;
        Some(b)
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.remaining() < n {
            return None;
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn varlen(&mut self) -> Option<u32> {
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | u32::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Some(value);
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy)]
enum Event {
    On { channel: u8, pitch: u8, velocity: u8 },
    Off { channel: u8, pitch: u8 },
    EndOfTrack,
}

struct Track {
    events: Vec<(u64, Event)>,
    tempos: Vec<TempoChange>,
    end_tick: u64,
}

fn parse_track(data: &[u8], index: usize) -> Result<Track, MidiError> {
    let bad = |reason: &str| MidiError::MalformedTrack { track: index, reason: reason.to_string() };
    let mut r = Reader { bytes: data, pos: 0 };
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    let mut events = Vec::new();
    let mut tempos = Vec::new();
    while r.remaining() > 0 {
        tick += u64::from(r.varlen().ok_or_else(|| bad("truncated delta time"))?);
        let first = r.u8().ok_or_else(|| bad("truncated event"))?;
        let (status, first_data) = if first & 0x80 != 0 {
            (first, None)
        } else {
            (running.ok_or_else(|| bad("running status without prior status"))?, Some(first))
        };
        match status {
            0xff => {
                let kind = r.u8().ok_or_else(|| bad("truncated meta event"))?;
                let len = r.varlen().ok_or_else(|| bad("truncated meta length"))? as usize;
                let payload = r.take(len).ok_or_else(|| bad("truncated meta payload"))?;
                match kind {
                    0x51 if len == 3 => {
                        let micros = u32::from_be_bytes([0, payload[0], payload[1], payload[2]]);
                        if micros == 0 {
                            return Err(bad("zero tempo"));
                        }
                        tempos.push(TempoChange { tick, micros_per_quarter: micros });
                    }
                    0x2f => {
                        events.push((tick, Event::EndOfTrack));
                        break;
                    }
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                let len = r.varlen().ok_or_else(|| bad("truncated sysex length"))? as usize;
                r.take(len).ok_or_else(|| bad("truncated sysex"))?;
            }
            0x80..=0xef => {
                running = Some(status);
                let data_len = if matches!(status & 0xf0, 0xc0 | 0xd0) { 1 } else { 2 };
                let mut data = [0u8; 2];
                let mut filled = 0;
                if let Some(d) = first_data {
                    data[0] = d;
                    filled = 1;
                }
                while filled < data_len {
                    data[filled] = r.u8().ok_or_else(|| bad("truncated channel message"))?;
                    filled += 1;
                }
                if data[..data_len].iter().any(|d| d & 0x80 != 0) {
                    return Err(bad("status byte inside channel message data"));
                }
                let channel = status & 0x0f;
                match status & 0xf0 {
                    0x90 if data[1] > 0 => {
                        events.push((tick, Event::On { channel, pitch: data[0], velocity: data[1] }))
                    }
                    0x90 | 0x80 => events.push((tick, Event::Off { channel, pitch: data[0] })),
                    _ => {}
                }
            }
            _ => return Err(bad(&format!("unsupported status byte {status:#04x}"))),
        }
    }
    Ok(Track { events, tempos, end_tick: tick })
}

/// Parses an SMF format 0 or 1 file. All tracks are merged; overlapping
/// same-pitch notes on a channel are closed first-in, first-out.
pub fn parse_midi(bytes: &[u8]) -> Result<ParsedMidi, MidiError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4) != Some(b"MThd") {
        return Err(MidiError::MalformedHeader("missing MThd magic".into()));
    }
    let header_len = r.u32().ok_or_else(|| MidiError::MalformedHeader("truncated header".into()))? as usize;
    if header_len < 6 {
        return Err(MidiError::MalformedHeader(format!("header length {header_len} < 6")));
    }
    let header = r
        .take(header_len)
        .ok_or_else(|| MidiError::MalformedHeader("truncated header".into()))?;
    let format = u16::from_be_bytes([header[0], header[1]]);
    let n_tracks = u16::from_be_bytes([header[2], header[3]]);
    let division = u16::from_be_bytes([header[4], header[5]]);
    match format {
        0 | 1 => {}
        2 => return Err(MidiError::UnsupportedFormat("SMF format 2".into())),
        f => return Err(MidiError::MalformedHeader(format!("unknown format {f}"))),
    }
    if division & 0x8000 != 0 {
        return Err(MidiError::UnsupportedFormat("SMPTE time division".into()));
    }
    if division == 0 {
        return Err(MidiError::MalformedHeader("ticks per quarter is zero".into()));
    }

    let mut tracks = Vec::with_capacity(usize::from(n_tracks));
    while tracks.len() < usize::from(n_tracks) && r.remaining() > 0 {
        let index = tracks.len();
        let id = r.take(4).ok_or_else(|| MidiError::MalformedTrack {
            track: index,
            reason: "truncated chunk header".into(),
        })?;
        let len = r.u32().ok_or_else(|| MidiError::MalformedTrack {
            track: index,
            reason: "truncated chunk length".into(),
        })? as usize;
        let data = r.take(len).ok_or_else(|| MidiError::MalformedTrack {
            track: index,
            reason: format!("chunk length {len} exceeds file"),
        })?;
        if id == b"MTrk" {
            tracks.push(parse_track(data, index)?);
        }
    }

    let tempo_map = TempoMap::from_changes(tracks.iter().flat_map(|t| t.tempos.iter().copied()));
    let mut warnings = ParseWarnings::default();
    let mut tick_notes: Vec<(u64, u64, u8, u8, u8)> = Vec::new();
    for track in &tracks {
        let mut open: HashMap<(u8, u8), VecDeque<(u64, u8)>> = HashMap::new();
        let mut end_tick = track.end_tick;
        for &(tick, event) in &track.events {
            match event {
                Event::On { channel, pitch, velocity } => {
                    open.entry((channel, pitch)).or_default().push_back((tick, velocity));
                }
                Event::Off { channel, pitch } => {
                    if let Some((start, velocity)) = open.get_mut(&(channel, pitch)).and_then(VecDeque::pop_front) {
                        tick_notes.push((start, tick, pitch, velocity, channel));
                    }
                }
                Event::EndOfTrack => end_tick = tick,
            }
        }
        let mut dangling: Vec<_> = open
            .into_iter()
            .flat_map(|((channel, pitch), q)| q.into_iter().map(move |(start, vel)| (start, pitch, vel, channel)))
            .collect();
        dangling.sort_unstable();
        for (start, pitch, velocity, channel) in dangling {
            warnings.unterminated_notes += 1;
            tick_notes.push((start, end_tick, pitch, velocity, channel));
        }
    }

    let tpq = division;
    let mut notes = Vec::with_capacity(tick_notes.len());
    for (start, end, pitch, velocity, channel) in tick_notes {
        if end <= start {
            warnings.zero_length_notes += 1;
            continue;
        }
        notes.push(Note {
            pitch,
            onset: tempo_map.tick_to_seconds(start, tpq),
            offset: tempo_map.tick_to_seconds(end, tpq),
            velocity,
            channel,
        });
    }
    let notes = NoteList::new(notes, tpq, tempo_map)?;
    Ok(ParsedMidi { notes, warnings })
}

fn push_varlen(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 4];
    let mut i = 3;
    buf[i] = (value & 0x7f) as u8;
    value >>= 7;
    while value > 0 {
        i -= 1;
        buf[i] = (value & 0x7f) as u8 | 0x80;
        value >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}

/// Serializes a note list as a single-track format 0 file, quantizing times
/// to the list's tick resolution through its tempo map. Note-offs sort before
/// note-ons at equal ticks so re-struck pitches pair up again on reparse.
pub fn write_midi(list: &NoteList) -> Vec<u8> {
    let tpq = list.ticks_per_quarter;
    // (tick, kind: 0 tempo / 1 off / 2 on, ordering key, bytes)
    let mut events: Vec<(u64, u8, usize, [u8; 3])> = Vec::new();
    for change in list.tempo_map.changes() {
        let m = change.micros_per_quarter.to_be_bytes();
        events.push((change.tick, 0, 0, [m[1], m[2], m[3]]));
    }
    for (i, n) in list.notes().iter().enumerate() {
        let on = list.tempo_map.seconds_to_tick(n.onset, tpq);
        let off = list.tempo_map.seconds_to_tick(n.offset, tpq).max(on + 1);
        events.push((on, 2, i, [0x90 | n.channel, n.pitch, n.velocity]));
        events.push((off, 1, i, [0x80 | n.channel, n.pitch, 0]));
    }
    events.sort_by_key(|&(tick, kind, i, _)| (tick, kind, i));

    let mut track = Vec::new();
    let mut last = 0u64;
    for (tick, kind, _, data) in events {
        push_varlen(&mut track, (tick - last) as u32);
        last = tick;
        if kind == 0 {
            track.extend_from_slice(&[0xff, 0x51, 0x03]);
        }
        track.extend_from_slice(&data);
    }
    track.extend_from_slice(&[0x00, 0xff, 0x2f, 0x00]);

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&tpq.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smf(format: u16, tpq: u16, tracks: &[Vec<u8>]) -> Vec<u8> {
        let mut out = b"MThd".to_vec();
        out.extend_from_slice(&6u32.to_be_bytes());
        out.extend_from_slice(&format.to_be_bytes());
        out.extend_from_slice(&(tracks.len() as u16).to_be_bytes());
        out.extend_from_slice(&tpq.to_be_bytes());
        for t in tracks {
            out.extend_from_slice(b"MTrk");
            out.extend_from_slice(&(t.len() as u32).to_be_bytes());
            out.extend_from_slice(t);
        }
        out
    }

    fn delta(v: u32) -> Vec<u8> {
        let mut out = Vec::new();
        push_varlen(&mut out, v);
        out
    }

    fn ev(dt: u32, bytes: &[u8]) -> Vec<u8> {
        let mut out = delta(dt);
        out.extend_from_slice(bytes);
        out
    }

    #[test]
    fn single_note_default_tempo() {
        let track = [
            ev(0, &[0xff, 0x51, 0x03, 0x07, 0xa1, 0x20]),
            ev(0, &[0x90, 60, 64]),
            ev(480, &[0x80, 60, 0]),
            ev(0, &[0xff, 0x2f, 0x00]),
        ]
        .concat();
        let parsed = parse_midi(&smf(0, 480, &[track])).unwrap();
        assert_eq!(parsed.notes.notes(), &[Note::new(60, 0.0, 0.5, 64)]);
        assert_eq!(parsed.warnings, ParseWarnings::default());
    }

    #[test]
    fn empty_track_gives_no_notes() {
        let parsed = parse_midi(&smf(0, 480, &[ev(0, &[0xff, 0x2f, 0x00])])).unwrap();
        assert!(parsed.notes.is_empty());
        assert_eq!(parsed.notes.tempo_map.changes()[0].micros_per_quarter, DEFAULT_TEMPO);
    }

    #[test]
    fn tempo_change_mid_note() {
        // conductor track + note track, format 1
        let conductor = [
            ev(0, &[0xff, 0x51, 0x03, 0x07, 0xa1, 0x20]),
            ev(480, &[0xff, 0x51, 0x03, 0x03, 0xd0, 0x90]),
            ev(0, &[0xff, 0x2f, 0x00]),
        ]
        .concat();
        let notes = [ev(0, &[0x90, 60, 80]), ev(960, &[0x80, 60, 0]), ev(0, &[0xff, 0x2f, 0x00])].concat();
        let parsed = parse_midi(&smf(1, 480, &[conductor, notes])).unwrap();
        let n = parsed.notes.notes()[0];
        assert_eq!(n.onset, 0.0);
        assert!((n.offset - 0.75).abs() < 1e-12);
    }

    #[test]
    fn running_status_and_zero_velocity_off() {
        let track = [
            ev(0, &[0x90, 60, 70]),
            ev(0, &[62, 71]),
            ev(240, &[60, 0]),
            ev(240, &[62, 0]),
            ev(0, &[0xff, 0x2f, 0x00]),
        ]
        .concat();
        let parsed = parse_midi(&smf(0, 480, &[track])).unwrap();
        let n = parsed.notes.notes();
        assert_eq!(n.len(), 2);
        assert_eq!((n[0].pitch, n[0].offset), (60, 0.25));
        assert_eq!((n[1].pitch, n[1].offset), (62, 0.5));
    }

    #[test]
    fn overlapping_same_pitch_is_fifo() {
        let track = [
            ev(0, &[0x90, 60, 50]),
            ev(100, &[0x90, 60, 90]),
            ev(100, &[0x80, 60, 0]),
            ev(100, &[0x80, 60, 0]),
            ev(0, &[0xff, 0x2f, 0x00]),
        ]
        .concat();
        let parsed = parse_midi(&smf(0, 480, &[track])).unwrap();
        let n = parsed.notes.notes();
        assert_eq!(n[0].velocity, 50);
        assert_eq!(n[0].offset, TempoMap::default().tick_to_seconds(200, 480));
        assert_eq!(n[1].velocity, 90);
        assert_eq!(n[1].offset, TempoMap::default().tick_to_seconds(300, 480));
    }

    #[test]
    fn unterminated_note_closed_at_track_end() {
        let track = [ev(0, &[0x90, 60, 64]), ev(960, &[0xff, 0x2f, 0x00])].concat();
        let parsed = parse_midi(&smf(0, 480, &[track])).unwrap();
        assert_eq!(parsed.warnings.unterminated_notes, 1);
        assert_eq!(parsed.notes.notes()[0].offset, 1.0);
    }

    #[test]
    fn header_errors() {
        assert!(matches!(parse_midi(b"RIFF...."), Err(MidiError::MalformedHeader(_))));
        let mut short = smf(0, 480, &[]);
        short.truncate(10);
        assert!(matches!(parse_midi(&short), Err(MidiError::MalformedHeader(_))));
        assert!(matches!(parse_midi(&smf(2, 480, &[])), Err(MidiError::UnsupportedFormat(_))));
        assert!(matches!(parse_midi(&smf(0, 0xe250, &[])), Err(MidiError::UnsupportedFormat(_))));
    }

    #[test]
    fn truncated_track_is_error() {
        let mut bytes = smf(0, 480, &[[ev(0, &[0x90, 60, 64]), ev(10, &[0x80, 60, 0])].concat()]);
        bytes.pop();
        assert!(matches!(parse_midi(&bytes), Err(MidiError::MalformedTrack { .. })));
    }

    #[test]
    fn sysex_and_other_meta_skipped() {
        let track = [
            ev(0, &[0xf0, 0x03, 0x7e, 0x7f, 0xf7]),
            ev(0, &[0xff, 0x03, 0x02, b'h', b'i']),
            ev(0, &[0xb0, 64, 127]),
            ev(0, &[0xc0, 5]),
            ev(0, &[0x91, 64, 30]),
            ev(480, &[0x81, 64, 0]),
            ev(0, &[0xff, 0x2f, 0x00]),
        ]
        .concat();
        let parsed = parse_midi(&smf(0, 480, &[track])).unwrap();
        assert_eq!(parsed.notes.len(), 1);
        assert_eq!(parsed.notes.notes()[0].channel, 1);
    }

    #[test]
    fn tempo_map_roundtrip_ticks() {
        let map = TempoMap::from_changes([
            TempoChange { tick: 480, micros_per_quarter: 250_000 },
            TempoChange { tick: 0, micros_per_quarter: 500_000 },
        ]);
        for tick in [0u64, 100, 480, 481, 960, 5000] {
            let s = map.tick_to_seconds(tick, 480);
            assert_eq!(map.seconds_to_tick(s, 480), tick);
        }
    }

    #[test]
    fn dump_format() {
        let list = NoteList::from_notes(vec![Note::new(60, 0.0, 0.5, 64)]).unwrap();
        assert_eq!(list.dump(), "60\t0.000000\t0.500000\t64\n");
    }

    #[test]
    fn notes_sorted_by_onset_pitch_channel() {
        let mut a = Note::new(64, 0.0, 1.0, 10);
        a.channel = 1;
        let list = NoteList::from_notes(vec![
            Note::new(67, 0.5, 1.0, 10),
            a,
            Note::new(64, 0.0, 1.0, 10),
            Note::new(60, 0.0, 1.0, 10),
        ])
        .unwrap();
        let order: Vec<_> = list.notes().iter().map(|n| (n.pitch, n.channel)).collect();
        assert_eq!(order, vec![(60, 0), (64, 0), (64, 1), (67, 0)]);
    }

    #[test]
    fn invalid_notes_rejected() {
        assert!(NoteList::from_notes(vec![Note::new(60, 1.0, 1.0, 64)]).is_err());
        assert!(NoteList::from_notes(vec![Note::new(60, 0.0, 1.0, 0)]).is_err());
    }
}
