//! Conversion between [`QuantizedPiece`] and REMI token streams.
//!
//! A well-formed stream, the only kind [`decode`] accepts, looks like
//!
//! ```text
//! stream := (Bar span*)+ EOS | EOS
//! span   := Beat Chord? Tempo? (Note_Pitch Note_Velocity Note_Duration)*
//! ```
//!
//! with at most one `Tempo` in the whole stream. [`encode`] always produces
//! this shape, and [`super::repair`] turns any token stream into it.

use std::fmt;

use thiserror::Error;

use super::chord::CHORD_WINDOW;
use super::sequence::RemiSequence;
use super::vocab::{snap_tempo, snap_velocity, ChordLabel, Token};
use crate::midi::DEFAULT_TEMPO_BPM;
use crate::piece::{normalize_notes, Diagnostics, Note, PieceError, QuantizedPiece, SUBBEATS_PER_BAR};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error(transparent)]
    InvalidPiece(#[from] PieceError),
    #[error("{got} chord labels for {bars} bars; expected one per bar or per half bar")]
    ChordCount { got: usize, bars: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum Problem {
    #[error("stream must start with Bar")]
    ExpectedBar,
    #[error("event before any Beat in its bar")]
    OutsideSpan,
    #[error("Chord after a Tempo, note or another Chord in the same span")]
    ChordOutOfOrder,
    #[error("Tempo after a note or another Tempo in the same span")]
    TempoOutOfOrder,
    #[error("second Tempo in the stream")]
    ExtraTempo,
    #[error("Note_Pitch not followed by Note_Velocity and Note_Duration")]
    IncompleteNote,
    #[error("Note_Velocity or Note_Duration without a preceding Note_Pitch")]
    Orphan,
    #[error("tokens after EOS")]
    AfterEos,
    #[error("stream does not end with EOS")]
    MissingEos,
}

/// The first well-formedness violation found in a stream.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("token {index} ({token}): {problem}; repair the stream before decoding")]
pub struct DecodeError {
    pub index: usize,
    pub token: TokenText,
    pub problem: Problem,
}

/// Printable form of the offending token (`<end>` past the last one).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenText(pub Option<Token>);

impl fmt::Display for TokenText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(t) => t.fmt(f),
            None => f.write_str("<end>"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decoded {
    pub piece: QuantizedPiece,
    /// One label per half bar.
    pub chords: Vec<ChordLabel>,
}

/// Maps per-bar labels onto half bars; per-half-bar input passes through.
fn half_bar_chords(chords: &[ChordLabel], bars: u32) -> Result<Vec<ChordLabel>, EncodeError> {
    let bars_usize = bars as usize;
    if chords.len() == bars_usize * 2 {
        Ok(chords.to_vec())
    } else if chords.len() == bars_usize {
        Ok(chords.iter().flat_map(|&c| [c, c]).collect())
    } else {
        Err(EncodeError::ChordCount { got: chords.len(), bars })
    }
}

/// Encodes a piece with one chord label per bar or per half bar.
///
/// Chord tokens are emitted at the start of a window only when the label
/// differs from the previous window's; the tempo appears once, in the first
/// span. Velocities are snapped down to the vocabulary grid and the tempo to
/// the nearest grid value.
pub fn encode(piece: &QuantizedPiece, chords: &[ChordLabel]) -> Result<RemiSequence, EncodeError> {
    piece.validate()?;
    let windows = half_bar_chords(chords, piece.bar_count)?;
    let mut out = Vec::with_capacity(piece.notes.len() * 4 + piece.bar_count as usize * 3 + 4);
    let mut notes = piece.notes.iter().peekable();
    let mut previous: Option<ChordLabel> = None;
    for bar in 0..piece.bar_count {
        out.push(Token::Bar);
        let mut changes = [None, None];
        for (half, change) in changes.iter_mut().enumerate() {
            let label = windows[bar as usize * 2 + half];
            if previous != Some(label) {
                *change = Some(label);
            }
            previous = Some(label);
        }
        let mut positions: Vec<u8> = piece.notes_in_bar(bar).map(|n| n.subbeat).collect();
        if bar == 0 || changes[0].is_some() {
            positions.push(0);
        }
        if changes[1].is_some() {
            positions.push(CHORD_WINDOW as u8);
        }
        positions.sort_unstable();
        positions.dedup();
        for s in positions {
            out.push(Token::SubBeat(s));
            if u32::from(s) % CHORD_WINDOW == 0 {
                if let Some(label) = changes[usize::from(s) / CHORD_WINDOW as usize] {
                    out.push(Token::Chord(label));
                }
            }
            if bar == 0 && s == 0 {
                out.push(Token::Tempo(snap_tempo(piece.tempo_bpm)));
            }
            while let Some(note) = notes.next_if(|n| n.bar == bar && n.subbeat == s) {
                out.push(Token::Pitch(note.pitch));
                out.push(Token::Velocity(snap_velocity(note.velocity)));
                out.push(Token::Duration(note.duration));
            }
        }
    }
    out.push(Token::Eos);
    Ok(RemiSequence::from_tokens(&out))
}

/// The piece `decode(encode(piece))` yields: tempo and velocities moved onto
/// the vocabulary grid.
pub fn snap_to_vocab(piece: &QuantizedPiece) -> QuantizedPiece {
    QuantizedPiece {
        notes: piece.notes.iter().map(|n| Note { velocity: snap_velocity(n.velocity), ..*n }).collect(),
        tempo_bpm: u32::from(snap_tempo(piece.tempo_bpm)),
        bar_count: piece.bar_count,
        diagnostics: piece.diagnostics,
    }
}

#[derive(Default)]
struct Span {
    subbeat: u8,
    chord: bool,
    tempo: bool,
    notes: bool,
}

/// Decodes a well-formed stream.
///
/// `Note_Duration_0` decodes to a one-sixteenth note and is counted in
/// [`Diagnostics::short_notes`]. Same-pitch overlaps are resolved as in
/// [`normalize_notes`], so any well-formed stream yields a valid piece.
pub fn decode(seq: &RemiSequence) -> Result<Decoded, DecodeError> {
    let tokens: Vec<Token> = seq.tokens().collect();
    let fail =
        |index: usize, problem: Problem| DecodeError { index, token: TokenText(tokens.get(index).copied()), problem };
    if tokens.first() != Some(&Token::Bar) && tokens.first() != Some(&Token::Eos) {
        return Err(fail(0, if tokens.is_empty() { Problem::MissingEos } else { Problem::ExpectedBar }));
    }

    let mut bar_count = 0u32;
    let mut span: Option<Span> = None;
    let mut tempo: Option<u16> = None;
    let mut notes = Vec::new();
    let mut chord_marks: Vec<(u32, ChordLabel)> = Vec::new();
    let mut diagnostics = Diagnostics::default();
    let mut i = 0;
    let mut terminated = false;
    while i < tokens.len() {
        match tokens[i] {
            Token::Bar => {
                bar_count += 1;
                span = None;
            }
            Token::SubBeat(s) => span = Some(Span { subbeat: s, ..Span::default() }),
            Token::Chord(label) => {
                let sp = span.as_mut().ok_or_else(|| fail(i, Problem::OutsideSpan))?;
                if sp.chord || sp.tempo || sp.notes {
                    return Err(fail(i, Problem::ChordOutOfOrder));
                }
                sp.chord = true;
                chord_marks.push(((bar_count - 1) * SUBBEATS_PER_BAR + u32::from(sp.subbeat), label));
            }
            Token::Tempo(t) => {
                let sp = span.as_mut().ok_or_else(|| fail(i, Problem::OutsideSpan))?;
                if tempo.is_some() {
                    return Err(fail(i, Problem::ExtraTempo));
                }
                if sp.notes {
                    return Err(fail(i, Problem::TempoOutOfOrder));
                }
                sp.tempo = true;
                tempo = Some(t);
            }
            Token::Pitch(pitch) => {
                let sp = span.as_mut().ok_or_else(|| fail(i, Problem::OutsideSpan))?;
                let (Some(Token::Velocity(velocity)), Some(Token::Duration(duration))) =
                    (tokens.get(i + 1).copied(), tokens.get(i + 2).copied())
                else {
                    return Err(fail(i, Problem::IncompleteNote));
                };
                if duration == 0 {
                    diagnostics.short_notes += 1;
                }
                sp.notes = true;
                notes.push(Note {
                    bar: bar_count - 1,
                    subbeat: sp.subbeat,
                    pitch,
                    velocity,
                    duration: duration.max(1),
                });
                i += 2;
            }
            Token::Velocity(_) | Token::Duration(_) => return Err(fail(i, Problem::Orphan)),
            Token::Eos => {
                if i + 1 != tokens.len() {
                    return Err(fail(i + 1, Problem::AfterEos));
                }
                terminated = true;
            }
        }
        i += 1;
    }
    if !terminated {
        return Err(fail(tokens.len(), Problem::MissingEos));
    }

    let mut chords = Vec::with_capacity(bar_count as usize * 2);
    let mut current = ChordLabel::NoChord;
    let mut marks = chord_marks.into_iter().peekable();
    for window in 0..bar_count * 2 {
        while let Some((_, label)) = marks.next_if(|&(pos, _)| pos / CHORD_WINDOW == window) {
            current = label;
        }
        chords.push(current);
    }

    let piece = QuantizedPiece {
        notes: normalize_notes(notes),
        tempo_bpm: tempo.map_or(DEFAULT_TEMPO_BPM, u32::from),
        bar_count,
        diagnostics,
    };
    Ok(Decoded { piece, chords })
}
