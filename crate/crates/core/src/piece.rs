//! Grid-quantized note representation shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sixteenth-note positions in one 4/4 bar.
pub const SUBBEATS_PER_BAR: u32 = 16;
/// Longest representable note, in sub-beats.
pub const MAX_DURATION: u8 = 16;
pub const MIN_TEMPO_BPM: u32 = 4;
pub const MAX_TEMPO_BPM: u32 = 999;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Note {
    pub bar: u32,
    pub subbeat: u8,
    pub pitch: u8,
    pub velocity: u8,
    /// Length in sub-beats, 1..=16.
    pub duration: u8,
}

impl Note {
    pub fn new(bar: u32, subbeat: u8, pitch: u8, velocity: u8, duration: u8) -> Self {
        Note { bar, subbeat, pitch, velocity, duration }
    }

    /// Absolute grid position of the onset.
    pub fn onset(&self) -> u32 {
        self.bar * SUBBEATS_PER_BAR + u32::from(self.subbeat)
    }

    /// Absolute grid position one past the release.
    pub fn end(&self) -> u32 {
        self.onset() + u32::from(self.duration)
    }

    fn sort_key(&self) -> (u32, u8, u8) {
        (self.bar, self.subbeat, self.pitch)
    }
}

/// Conditions recorded while producing a piece from messier input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Note-ons with no matching note-off, closed at the end of the piece.
    pub unpaired_note_ons: u32,
    /// Notes whose measured length rounded to zero sub-beats before clamping.
    pub short_notes: u32,
}

impl Diagnostics {
    pub fn is_clean(&self) -> bool {
        *self == Diagnostics::default()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedPiece {
    pub notes: Vec<Note>,
    pub tempo_bpm: u32,
    pub bar_count: u32,
    #[serde(default, skip_serializing_if = "Diagnostics::is_clean")]
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PieceError {
    #[error("note {index}: bar {bar} outside piece of {bar_count} bars")]
    BarOutOfRange { index: usize, bar: u32, bar_count: u32 },
    #[error("note {index}: sub-beat {subbeat} outside 0..16")]
    SubbeatOutOfRange { index: usize, subbeat: u8 },
    #[error("note {index}: pitch {pitch} outside 0..128")]
    PitchOutOfRange { index: usize, pitch: u8 },
    #[error("note {index}: velocity {velocity} outside 1..128")]
    VelocityOutOfRange { index: usize, velocity: u8 },
    #[error("note {index}: duration {duration} outside 1..=16")]
    DurationOutOfRange { index: usize, duration: u8 },
    #[error("note {index}: notes not sorted by (bar, sub-beat, pitch)")]
    Unsorted { index: usize },
    #[error("note {index}: overlaps an earlier note of pitch {pitch}")]
    OverlappingPitch { index: usize, pitch: u8 },
    #[error("tempo {0} bpm outside {MIN_TEMPO_BPM}..={MAX_TEMPO_BPM}")]
    TempoOutOfRange(u32),
}

impl QuantizedPiece {
    pub fn empty(tempo_bpm: u32) -> Self {
        QuantizedPiece { notes: Vec::new(), tempo_bpm, bar_count: 0, diagnostics: Diagnostics::default() }
    }

    /// Builds a piece from arbitrary notes, sorting them and resolving
    /// same-pitch overlaps with [`normalize_notes`].
    pub fn from_notes(notes: Vec<Note>, tempo_bpm: u32, bar_count: u32) -> Self {
        QuantizedPiece { notes: normalize_notes(notes), tempo_bpm, bar_count, diagnostics: Diagnostics::default() }
    }

    /// Checks every invariant of a valid piece.
    ///
    /// Besides the range checks, two notes of the same pitch may not sound at
    /// the same time: MIDI cannot represent that unambiguously, so such a
    /// piece would not survive a trip through a Standard MIDI File.
    pub fn validate(&self) -> Result<(), PieceError> {
        if !(MIN_TEMPO_BPM..=MAX_TEMPO_BPM).contains(&self.tempo_bpm) {
            return Err(PieceError::TempoOutOfRange(self.tempo_bpm));
        }
        let mut last_end = [0u32; 128];
        let mut seen = [false; 128];
        for (index, note) in self.notes.iter().enumerate() {
            if note.bar >= self.bar_count {
                return Err(PieceError::BarOutOfRange { index, bar: note.bar, bar_count: self.bar_count });
            }
            if u32::from(note.subbeat) >= SUBBEATS_PER_BAR {
                return Err(PieceError::SubbeatOutOfRange { index, subbeat: note.subbeat });
            }
            if note.pitch > 127 {
                return Err(PieceError::PitchOutOfRange { index, pitch: note.pitch });
            }
            if note.velocity == 0 || note.velocity > 127 {
                return Err(PieceError::VelocityOutOfRange { index, velocity: note.velocity });
            }
            if note.duration == 0 || note.duration > MAX_DURATION {
                return Err(PieceError::DurationOutOfRange { index, duration: note.duration });
            }
            if index > 0 && self.notes[index - 1].sort_key() >= note.sort_key() {
                return Err(PieceError::Unsorted { index });
            }
            let p = usize::from(note.pitch);
            if seen[p] && note.onset() < last_end[p] {
                return Err(PieceError::OverlappingPitch { index, pitch: note.pitch });
            }
            seen[p] = true;
            last_end[p] = note.end();
        }
        Ok(())
    }

    /// Notes whose onset falls in `bar`.
    pub fn notes_in_bar(&self, bar: u32) -> impl Iterator<Item = &Note> {
        self.notes.iter().filter(move |n| n.bar == bar)
    }

    /// Shifts every pitch by `semitones`; `None` if any pitch leaves 0..128.
    pub fn transposed(&self, semitones: i32) -> Option<QuantizedPiece> {
        let notes = self
            .notes
            .iter()
            .map(|n| {
                let p = i32::from(n.pitch) + semitones;
                (0..128).contains(&p).then_some(Note { pitch: p as u8, ..*n })
            })
            .collect::<Option<Vec<_>>>()?;
        Some(QuantizedPiece { notes, ..self.clone() })
    }

    /// Copies bars `start..start + len` into a new piece whose first bar is 0.
    pub fn slice_bars(&self, start: u32, len: u32) -> QuantizedPiece {
        let end = start + len;
        let notes = self
            .notes
            .iter()
            .filter(|n| n.bar >= start && n.bar < end)
            .map(|n| Note { bar: n.bar - start, ..*n })
            .collect();
        QuantizedPiece {
            notes,
            tempo_bpm: self.tempo_bpm,
            bar_count: len.min(self.bar_count.saturating_sub(start)),
            diagnostics: Diagnostics::default(),
        }
    }
}

/// Sorts notes by (bar, sub-beat, pitch) and makes same-pitch notes
/// monophonic: of two notes with the same pitch and onset only the first is
/// kept, and a note still sounding when the next one of its pitch starts is
/// cut short at that onset.
pub fn normalize_notes(mut notes: Vec<Note>) -> Vec<Note> {
    notes.sort_by_key(Note::sort_key);
    notes.dedup_by(|later, earlier| later.sort_key() == earlier.sort_key());
    let mut next_onset: [Option<u32>; 128] = [None; 128];
    for note in notes.iter_mut().rev() {
        let p = usize::from(note.pitch.min(127));
        if let Some(next) = next_onset[p] {
            if note.end() > next {
                note.duration = (next - note.onset()) as u8;
            }
        }
        next_onset[p] = Some(note.onset());
    }
    notes
}
