//! Rule-based clean-up of raw generated token streams.
//!
//! The rules, applied in one pass:
//!
//! * only the first `Chord` of each Bar/Beat-delimited span survives;
//! * only the first `Tempo` of the stream survives; without one,
//!   `Tempo_110` goes into the first span;
//! * a `Note_Pitch` missing its velocity or duration before the next
//!   pitch, beat or bar gets velocity 76 and/or duration 4; velocity and
//!   duration tokens with no pitch to attach to are dropped;
//! * the stream starts with `Bar` and ends with a single `EOS`;
//! * events between a `Bar` and its first `Beat` go into an inserted `Beat_0`.
//!
//! Output is in the canonical span order (Beat, Chord, Tempo, notes), so it
//! always decodes, and repairing it again changes nothing.

use serde::Serialize;

use super::sequence::RemiSequence;
use super::vocab::{ChordLabel, Token};

pub const DEFAULT_TEMPO: u16 = 110;
pub const DEFAULT_VELOCITY: u8 = 76;
pub const DEFAULT_DURATION: u8 = 4;

/// Counts of every change the repair pass made.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RepairReport {
    pub bars_inserted: usize,
    pub beats_inserted: usize,
    pub chords_dropped: usize,
    pub tempos_dropped: usize,
    pub tempo_inserted: bool,
    pub velocities_defaulted: usize,
    pub durations_defaulted: usize,
    pub orphans_dropped: usize,
    pub eos_dropped: usize,
    pub eos_appended: bool,
}

impl RepairReport {
    pub fn total_fixes(&self) -> usize {
        self.bars_inserted
            + self.beats_inserted
            + self.chords_dropped
            + self.tempos_dropped
            + usize::from(self.tempo_inserted)
            + self.velocities_defaulted
            + self.durations_defaulted
            + self.orphans_dropped
            + self.eos_dropped
            + usize::from(self.eos_appended)
    }
}

struct PendingNote {
    pitch: u8,
    velocity: Option<u8>,
    duration: Option<u8>,
}

struct Span {
    subbeat: u8,
    chord: Option<ChordLabel>,
    tempo: Option<u16>,
    notes: Vec<PendingNote>,
}

impl Span {
    fn new(subbeat: u8) -> Self {
        Span { subbeat, chord: None, tempo: None, notes: Vec::new() }
    }
}

#[derive(Default)]
struct Builder {
    bars: Vec<Vec<Span>>,
    /// Whether the current bar has a span open for events.
    span_open: bool,
    /// First tempo seen while no span was open.
    pending_tempo: Option<u16>,
    tempo_seen: bool,
    report: RepairReport,
}

impl Builder {
    fn bar(&mut self) -> &mut Vec<Span> {
        if self.bars.is_empty() {
            self.report.bars_inserted += 1;
            self.bars.push(Vec::new());
            self.span_open = false;
        }
        self.bars.last_mut().unwrap()
    }

    fn open_span(&mut self, subbeat: u8) {
        let mut span = Span::new(subbeat);
        span.tempo = self.pending_tempo.take();
        self.bar().push(span);
        self.span_open = true;
    }

    fn span(&mut self) -> &mut Span {
        if !self.span_open {
            self.report.beats_inserted += 1;
            self.open_span(0);
        }
        self.bars.last_mut().unwrap().last_mut().unwrap()
    }

    /// The last note of the open span, if nothing but chords and tempos
    /// came after its pitch.
    fn last_note(&mut self) -> Option<&mut PendingNote> {
        if !self.span_open {
            return None;
        }
        self.bars.last_mut()?.last_mut()?.notes.last_mut()
    }

    fn push(&mut self, token: Token) {
        match token {
            Token::Bar => {
                self.bars.push(Vec::new());
                self.span_open = false;
            }
            Token::SubBeat(s) => self.open_span(s),
            Token::Chord(label) => {
                let span = self.span();
                if span.chord.is_none() {
                    span.chord = Some(label);
                } else {
                    self.report.chords_dropped += 1;
                }
            }
            Token::Tempo(t) => {
                if self.tempo_seen {
                    self.report.tempos_dropped += 1;
                } else {
                    self.tempo_seen = true;
                    if self.span_open {
                        self.span().tempo = Some(t);
                    } else {
                        self.pending_tempo = Some(t);
                    }
                }
            }
            Token::Pitch(pitch) => {
                self.span().notes.push(PendingNote { pitch, velocity: None, duration: None });
            }
            Token::Velocity(v) => match self.last_note() {
                Some(note) if note.velocity.is_none() => note.velocity = Some(v),
                _ => self.report.orphans_dropped += 1,
            },
            Token::Duration(d) => match self.last_note() {
                Some(note) if note.duration.is_none() => note.duration = Some(d),
                _ => self.report.orphans_dropped += 1,
            },
            Token::Eos => {}
        }
    }

    fn finish(mut self) -> (RemiSequence, RepairReport) {
        if let Some(t) = self.pending_tempo.take() {
            // tempo after the last Beat of a bar and nothing following it
            self.report.beats_inserted += 1;
            let mut span = Span::new(0);
            span.tempo = Some(t);
            self.bar().push(span);
        }
        self.bar();
        if !self.tempo_seen {
            if self.bars[0].is_empty() {
                self.report.beats_inserted += 1;
                self.bars[0].push(Span::new(0));
            }
            self.report.tempo_inserted = true;
            self.bars[0][0].tempo = Some(DEFAULT_TEMPO);
        }

        let mut out = Vec::new();
        for bar in &self.bars {
            out.push(Token::Bar);
            for span in bar {
                out.push(Token::SubBeat(span.subbeat));
                if let Some(label) = span.chord {
                    out.push(Token::Chord(label));
                }
                if let Some(t) = span.tempo {
                    out.push(Token::Tempo(t));
                }
                for note in &span.notes {
                    if note.velocity.is_none() {
                        self.report.velocities_defaulted += 1;
                    }
                    if note.duration.is_none() {
                        self.report.durations_defaulted += 1;
                    }
                    out.push(Token::Pitch(note.pitch));
                    out.push(Token::Velocity(note.velocity.unwrap_or(DEFAULT_VELOCITY)));
                    out.push(Token::Duration(note.duration.unwrap_or(DEFAULT_DURATION)));
                }
            }
        }
        out.push(Token::Eos);
        (RemiSequence::from_tokens(&out), self.report)
    }
}

/// Makes any vocabulary token stream decodable.
pub fn repair(raw: &RemiSequence) -> RemiSequence {
    repair_with_report(raw).0
}

pub fn repair_with_report(raw: &RemiSequence) -> (RemiSequence, RepairReport) {
    let mut builder = Builder::default();
    let n = raw.len();
    for (i, token) in raw.tokens().enumerate() {
        if token == Token::Eos && i + 1 != n {
            builder.report.eos_dropped += 1;
        }
        builder.push(token);
    }
    if raw.tokens().last() != Some(Token::Eos) {
        builder.report.eos_appended = true;
    }
    builder.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::piece::{Note, QuantizedPiece};
    use crate::remi::codec::{decode, encode};
    use crate::remi::vocab::Quality;

    fn lines(seq: &RemiSequence) -> Vec<String> {
        seq.tokens().map(|t| t.to_string()).collect()
    }

    #[test]
    fn lone_pitch_gets_scaffolding_and_defaults() {
        let raw = RemiSequence::from_tokens(&[Token::Pitch(60), Token::Eos]);
        let (out, report) = repair_with_report(&raw);
        assert_eq!(
            out.tokens().collect::<Vec<_>>(),
            vec![
                Token::Bar,
                Token::SubBeat(0),
                Token::Tempo(110),
                Token::Pitch(60),
                Token::Velocity(76),
                Token::Duration(4),
                Token::Eos
            ]
        );
        assert!(report.tempo_inserted);
        assert_eq!((report.bars_inserted, report.beats_inserted), (1, 1));
        assert_eq!((report.velocities_defaulted, report.durations_defaulted), (1, 1));
    }

    #[test]
    fn second_printed_example() {
        let raw = RemiSequence::from_text(
            "Bar_None\nTempo_203\nChord_C#_+\nChord_G_o\nBeat_2\nNote_Pitch_60\nNote_Duration_240\n\
             Note_Velocity_66\nNote_Pitch_80\nChord_D#_m\nChord_D#_o7\nNote_Pitch_4\nChord_B_sus2\nTempo_92\n\
             Note_Pitch_48\nNote_Pitch_123\nNote_Pitch_43",
        )
        .unwrap();
        let (out, report) = repair_with_report(&raw);
        assert_eq!(
            lines(&out)[..10],
            [
                "Bar_None",
                "Beat_0",
                "Chord_C#_+",
                "Tempo_203",
                "Beat_2",
                "Chord_D#_m",
                "Note_Pitch_60",
                "Note_Velocity_66",
                "Note_Duration_240",
                "Note_Pitch_80",
            ]
        );
        assert_eq!(report.chords_dropped, 3);
        assert_eq!(report.tempos_dropped, 1);
        let tempos = out.tokens().filter(|t| matches!(t, Token::Tempo(_))).count();
        assert_eq!(tempos, 1);
        let decoded = decode(&out).unwrap();
        assert_eq!(decoded.piece.tempo_bpm, 203);
        assert_eq!(decoded.piece.notes.len(), 6);
    }

    #[test]
    fn first_printed_example_keeps_every_pitch() {
        let raw = RemiSequence::from_text(
            "Bar_None\nChord_C#_sus4\nChord_G_m\nChord_F#_m7\nNote_Pitch_10\nChord_A#_7\nNote_Velocity_110\n\
             Note_Pitch_6\nNote_Velocity_48\nTempo_44\nNote_Velocity_92\nNote_Pitch_32\nTempo_194\nNote_Pitch_73\n\
             Tempo_104\nNote_Pitch_43\nNote_Velocity_108",
        )
        .unwrap();
        let (out, report) = repair_with_report(&raw);
        let d = decode(&out).unwrap();
        let pitches: Vec<u8> =
            raw.tokens().filter_map(|t| if let Token::Pitch(p) = t { Some(p) } else { None }).collect();
        let mut kept: Vec<u8> = d.piece.notes.iter().map(|n| n.pitch).collect();
        kept.sort_unstable();
        let mut expected = pitches.clone();
        expected.sort_unstable();
        assert_eq!(kept, expected);
        assert_eq!(d.piece.tempo_bpm, 44);
        assert_eq!(report.chords_dropped, 3);
        assert_eq!(report.tempos_dropped, 2);
        assert_eq!(report.orphans_dropped, 1);
        assert_eq!(d.chords[0], ChordLabel::new(1, Quality::Sus4));
    }

    #[test]
    fn encoder_output_is_a_fixed_point() {
        let piece = QuantizedPiece::from_notes(
            vec![Note::new(0, 0, 60, 80, 4), Note::new(1, 5, 62, 90, 3), Note::new(1, 9, 70, 64, 16)],
            140,
            3,
        );
        let seq = encode(&piece, &crate::remi::detect_chords(&piece)).unwrap();
        let (out, report) = repair_with_report(&seq);
        assert_eq!(out, seq);
        assert_eq!(report, RepairReport::default());
    }

    #[test]
    fn empty_stream_becomes_minimal_piece() {
        let out = repair(&RemiSequence::default());
        assert_eq!(lines(&out), ["Bar_None", "Beat_0", "Tempo_110", "EOS_None"]);
        assert_eq!(repair(&out), out);
    }

    #[test]
    fn interior_eos_is_dropped_and_tempo_after_last_beat_is_kept() {
        let raw = RemiSequence::from_tokens(&[Token::Eos, Token::Bar, Token::Bar, Token::Tempo(80)]);
        let (out, report) = repair_with_report(&raw);
        assert_eq!(lines(&out), ["Bar_None", "Bar_None", "Beat_0", "Tempo_80", "EOS_None"]);
        assert_eq!(report.eos_dropped, 1);
        assert!(report.eos_appended);
        assert!(decode(&out).is_ok());
        assert_eq!(repair(&out), out);
    }
}
