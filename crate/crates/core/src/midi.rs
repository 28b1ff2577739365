//! MIDI-CSV codec and the flat pitch-sequence representation.
//!
//! Input follows the `midicsv` textual convention: one record per line,
//! comma-separated, `track, time, type, ...`. Only the header and note
//! records are interpreted; every other record type is skipped.
//!
//! Chords flatten to consecutive observations sharing a timestamp, in file
//! order. Tracks are merged into a single stream ordered by timestamp.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tempo written on export: 120 bpm.
pub const DEFAULT_TEMPO_USEC: u32 = 500_000;
pub const DEFAULT_VELOCITY: u8 = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoteKind {
    On,
    Off,
}

/// A single note record as read from a MIDI-CSV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PitchEvent {
    pub pitch: u8,
    pub timestamp: u64,
    pub kind: NoteKind,
    pub track: u32,
    pub velocity: u8,
}

/// One sounded note in the model-facing stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Note {
    pub pitch: u8,
    pub timestamp: u64,
}

/// Ordered note-on stream of a piece.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PitchSequence {
    pub events: Vec<Note>,
    pub ticks_per_quarter: u32,
    pub source_name: String,
}

impl PitchSequence {
    pub fn new(events: Vec<Note>, ticks_per_quarter: u32, source_name: impl Into<String>) -> Self {
        PitchSequence {
            events,
            ticks_per_quarter,
            source_name: source_name.into(),
        }
    }

    /// Builds a sequence from bare pitches, one per quarter-note step.
    pub fn from_pitches(pitches: &[u8], ticks_per_quarter: u32, source_name: &str) -> Self {
        let events = pitches
            .iter()
            .enumerate()
            .map(|(i, &pitch)| Note {
                pitch,
                timestamp: i as u64 * ticks_per_quarter as u64,
            })
            .collect();
        PitchSequence::new(events, ticks_per_quarter, source_name)
    }

    /// Same rhythm as `self`, different pitches. Used to attach generated
    /// pitch streams to the training piece's timing grid.
    pub fn with_pitches(&self, pitches: &[u8], source_name: &str) -> Result<Self> {
        if pitches.len() != self.events.len() {
            return Err(Error::InvalidParams(format!(
                "pitch list has {} entries but the timing grid has {}",
                pitches.len(),
                self.events.len()
            )));
        }
        let events = self
            .events
            .iter()
            .zip(pitches)
            .map(|(e, &pitch)| Note {
                pitch,
                timestamp: e.timestamp,
            })
            .collect();
        Ok(PitchSequence::new(events, self.ticks_per_quarter, source_name))
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn pitches(&self) -> Vec<u8> {
        self.events.iter().map(|e| e.pitch).collect()
    }

    pub fn timestamps(&self) -> Vec<u64> {
        self.events.iter().map(|e| e.timestamp).collect()
    }

    /// Groups consecutive notes that share a timestamp.
    pub fn chords(&self) -> Vec<&[Note]> {
        self.events
            .chunk_by(|a, b| a.timestamp == b.timestamp)
            .collect()
    }
}

/// Sorted set of the distinct pitches of a piece.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PitchAlphabet {
    symbols: Vec<u8>,
}

impl PitchAlphabet {
    pub fn from_symbols(mut symbols: Vec<u8>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::EmptySequence);
        }
        symbols.sort_unstable();
        symbols.dedup();
        Ok(PitchAlphabet { symbols })
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn index_of(&self, pitch: u8) -> Option<usize> {
        self.symbols.binary_search(&pitch).ok()
    }

    pub fn pitch(&self, index: usize) -> Option<u8> {
        self.symbols.get(index).copied()
    }

    /// Maps every pitch of `seq` to its ordinal.
    pub fn encode(&self, seq: &PitchSequence) -> Result<Vec<usize>> {
        seq.events
            .iter()
            .enumerate()
            .map(|(position, e)| {
                self.index_of(e.pitch).ok_or(Error::PitchOutOfAlphabet {
                    position,
                    pitch: e.pitch,
                })
            })
            .collect()
    }

    pub fn decode(&self, symbols: &[usize]) -> Result<Vec<u8>> {
        symbols
            .iter()
            .enumerate()
            .map(|(position, &s)| {
                self.pitch(s).ok_or(Error::SymbolOutOfAlphabet {
                    position,
                    symbol: s,
                    alphabet_size: self.len(),
                })
            })
            .collect()
    }

    /// Sorted union of two alphabets.
    pub fn union(&self, other: &PitchAlphabet) -> PitchAlphabet {
        let mut symbols = self.symbols.clone();
        symbols.extend_from_slice(&other.symbols);
        symbols.sort_unstable();
        symbols.dedup();
        PitchAlphabet { symbols }
    }
}

pub fn build_alphabet(seq: &PitchSequence) -> Result<PitchAlphabet> {
    PitchAlphabet::from_symbols(seq.pitches())
}

fn parse_field<T: std::str::FromStr>(field: &str, line: usize, what: &str) -> Result<T> {
    field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("{what} is not a valid number: {:?}", field.trim()),
    })
}

/// Reads every note record (on and off) in file order.
pub fn parse_midi_events(text: &str) -> Result<(u32, Vec<PitchEvent>)> {
    let mut division = None;
    let mut events = Vec::new();
    let mut last_time: BTreeMap<u32, u64> = BTreeMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
            continue;
        }
        // Text meta records may contain quoted commas past the third field;
        // those records are never split further.
        let mut head = trimmed.splitn(4, ',');
        let (Some(track), Some(time), Some(kind)) = (head.next(), head.next(), head.next()) else {
            return Err(Error::Parse {
                line,
                message: "expected at least three fields".into(),
            });
        };
        let kind = kind.trim();
        match kind {
            "Header" => {
                let fields: Vec<&str> = trimmed.split(',').collect();
                if fields.len() != 6 {
                    return Err(Error::Parse {
                        line,
                        message: format!("Header record has {} fields, expected 6", fields.len()),
                    });
                }
                let div: u32 = parse_field(fields[5], line, "division")?;
                if div == 0 {
                    return Err(Error::Format(format!(
                        "line {line}: ticks per quarter must be positive"
                    )));
                }
                division = Some(div);
            }
            "Note_on_c" | "Note_off_c" => {
                if division.is_none() {
                    return Err(Error::Format(format!(
                        "line {line}: note record before Header record"
                    )));
                }
                let fields: Vec<&str> = trimmed.split(',').collect();
                if fields.len() != 6 {
                    return Err(Error::Parse {
                        line,
                        message: format!("{kind} record has {} fields, expected 6", fields.len()),
                    });
                }
                let track: u32 = parse_field(track, line, "track")?;
                let timestamp: u64 = parse_field(time, line, "time")?;
                let _channel: u8 = parse_field(fields[3], line, "channel")?;
                let pitch: i64 = parse_field(fields[4], line, "pitch")?;
                let velocity: i64 = parse_field(fields[5], line, "velocity")?;
                if !(0..=127).contains(&pitch) {
                    return Err(Error::PitchRange { line, pitch });
                }
                if !(0..=127).contains(&velocity) {
                    return Err(Error::Parse {
                        line,
                        message: format!("velocity {velocity} outside 0..=127"),
                    });
                }
                let prev = last_time.entry(track).or_insert(0);
                if timestamp < *prev {
                    return Err(Error::Format(format!(
                        "line {line}: time {timestamp} decreases within track {track}"
                    )));
                }
                *prev = timestamp;
                let kind = if kind == "Note_on_c" && velocity > 0 {
                    NoteKind::On
                } else {
                    NoteKind::Off
                };
                events.push(PitchEvent {
                    pitch: pitch as u8,
                    timestamp,
                    kind,
                    track,
                    velocity: velocity as u8,
                });
            }
            _ => {}
        }
    }

    let division = division.ok_or_else(|| Error::Format("missing Header record".into()))?;
    Ok((division, events))
}

/// Parses a MIDI-CSV document into its note-on stream.
pub fn parse_midi_csv(text: &str, source_name: &str) -> Result<PitchSequence> {
    let (division, events) = parse_midi_events(text)?;
    let mut notes: Vec<Note> = events
        .iter()
        .filter(|e| e.kind == NoteKind::On)
        .map(|e| Note {
            pitch: e.pitch,
            timestamp: e.timestamp,
        })
        .collect();
    // stable: equal timestamps keep file order
    notes.sort_by_key(|n| n.timestamp);
    Ok(PitchSequence::new(notes, division, source_name))
}

/// Writes a single-track MIDI-CSV document, each note lasting
/// `note_duration` ticks.
pub fn emit_midi_csv(seq: &PitchSequence, note_duration: u64) -> Result<String> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    if note_duration == 0 {
        return Err(Error::InvalidParams("note duration must be positive".into()));
    }
    // (time, off-before-on, emission order, pitch, is_on)
    let mut records: Vec<(u64, u8, usize, u8, bool)> = Vec::with_capacity(seq.len() * 2);
    for (i, n) in seq.events.iter().enumerate() {
        records.push((n.timestamp, 1, i, n.pitch, true));
        records.push((n.timestamp + note_duration, 0, i, n.pitch, false));
    }
    records.sort_by_key(|r| (r.0, r.1, r.2));
    let end = records.last().map(|r| r.0).unwrap_or(0);

    let mut out = String::new();
    let _ = writeln!(out, "0, 0, Header, 0, 1, {}", seq.ticks_per_quarter);
    let _ = writeln!(out, "1, 0, Start_track");
    let _ = writeln!(out, "1, 0, Tempo, {DEFAULT_TEMPO_USEC}");
    for (time, _, _, pitch, on) in records {
        if on {
            let _ = writeln!(out, "1, {time}, Note_on_c, 0, {pitch}, {DEFAULT_VELOCITY}");
        } else {
            let _ = writeln!(out, "1, {time}, Note_off_c, 0, {pitch}, 0");
        }
    }
    let _ = writeln!(out, "1, {end}, End_track");
    let _ = writeln!(out, "0, 0, End_of_file");
    Ok(out)
}

/// Default export duration: one eighth note.
pub fn default_note_duration(ticks_per_quarter: u32) -> u64 {
    (ticks_per_quarter as u64 / 2).max(1)
}
