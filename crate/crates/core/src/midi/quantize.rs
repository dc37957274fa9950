use std::collections::{HashMap, VecDeque};

use log::warn;

use super::smf::{EventKind, MidiPiece};
use crate::piece::{
    normalize_notes, Diagnostics, Note, QuantizedPiece, MAX_DURATION, MAX_TEMPO_BPM, MIN_TEMPO_BPM, SUBBEATS_PER_BAR,
};

/// Tempo assumed by Standard MIDI Files that carry no set-tempo event.
pub const DEFAULT_TEMPO_BPM: u32 = 120;

/// Nearest sub-beat index for a tick count, ties rounding up.
fn ticks_to_subbeats(ticks: u64, ticks_per_quarter: u64) -> u64 {
    (8 * ticks + ticks_per_quarter) / (2 * ticks_per_quarter)
}

pub fn micros_to_bpm(micros_per_quarter: u32) -> u32 {
    if micros_per_quarter == 0 {
        return MAX_TEMPO_BPM;
    }
    ((60_000_000f64 / f64::from(micros_per_quarter)).round() as u32).clamp(MIN_TEMPO_BPM, MAX_TEMPO_BPM)
}

/// Snaps a parsed file onto the sixteenth-note grid, assuming 4/4.
pub fn quantize(piece: &MidiPiece) -> QuantizedPiece {
    quantize_with_tempo(piece, DEFAULT_TEMPO_BPM)
}

/// As [`quantize`], using `default_bpm` when the file has no tempo event.
pub fn quantize_with_tempo(piece: &MidiPiece, default_bpm: u32) -> QuantizedPiece {
    let tpq = u64::from(piece.ticks_per_quarter.max(1));
    let tempo_bpm = piece
        .events
        .iter()
        .find_map(|e| match e.kind {
            EventKind::Tempo { micros_per_quarter } => Some(micros_to_bpm(micros_per_quarter)),
            _ => None,
        })
        .unwrap_or(default_bpm);

    let mut diagnostics = Diagnostics::default();
    let mut open: HashMap<(u8, u8), VecDeque<(u64, u8)>> = HashMap::new();
    let mut spans: Vec<(u64, u64, u8, u8)> = Vec::new();
    for event in &piece.events {
        match event.kind {
            EventKind::NoteOn { channel, pitch, velocity } => {
                open.entry((channel, pitch)).or_default().push_back((event.tick, velocity));
            }
            EventKind::NoteOff { channel, pitch, .. } => {
                if let Some((on, velocity)) = open.get_mut(&(channel, pitch)).and_then(VecDeque::pop_front) {
                    spans.push((on, event.tick, pitch, velocity));
                }
            }
            EventKind::Tempo { .. } => {}
        }
    }
    let mut dangling: Vec<_> = open
        .into_iter()
        .flat_map(|((_, pitch), queue)| queue.into_iter().map(move |(on, velocity)| (on, pitch, velocity)))
        .collect();
    if !dangling.is_empty() {
        warn!("{} note-on events without note-off closed at end of piece", dangling.len());
        dangling.sort_unstable();
        diagnostics.unpaired_note_ons = dangling.len() as u32;
        for (on, pitch, velocity) in dangling {
            spans.push((on, piece.end_tick.max(on), pitch, velocity));
        }
    }

    let mut notes = Vec::with_capacity(spans.len());
    let mut bar_count = (ticks_to_subbeats(piece.end_tick, tpq) / u64::from(SUBBEATS_PER_BAR)) as u32;
    for (on, off, pitch, velocity) in spans {
        let onset = ticks_to_subbeats(on, tpq);
        let raw_duration = ticks_to_subbeats(off - on, tpq);
        if raw_duration == 0 {
            diagnostics.short_notes += 1;
        }
        let bar = (onset / u64::from(SUBBEATS_PER_BAR)) as u32;
        bar_count = bar_count.max(bar + 1);
        notes.push(Note {
            bar,
            subbeat: (onset % u64::from(SUBBEATS_PER_BAR)) as u8,
            pitch,
            velocity,
            duration: raw_duration.clamp(1, u64::from(MAX_DURATION)) as u8,
        });
    }

    QuantizedPiece { notes: normalize_notes(notes), tempo_bpm, bar_count, diagnostics }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::smf::MidiEvent;

    fn on(tick: u64, pitch: u8) -> MidiEvent {
        MidiEvent { tick, kind: EventKind::NoteOn { channel: 0, pitch, velocity: 72 } }
    }

    fn off(tick: u64, pitch: u8) -> MidiEvent {
        MidiEvent { tick, kind: EventKind::NoteOff { channel: 0, pitch, velocity: 0 } }
    }

    fn midi(events: Vec<MidiEvent>, end_tick: u64) -> MidiPiece {
        MidiPiece { ticks_per_quarter: 480, events, end_tick }
    }

    #[test]
    fn quarter_note_is_four_subbeats() {
        let q = quantize(&midi(vec![on(0, 60), off(480, 60)], 480));
        assert_eq!(q.notes, vec![Note::new(0, 0, 60, 72, 4)]);
        assert_eq!(q.bar_count, 1);
        assert_eq!(q.tempo_bpm, DEFAULT_TEMPO_BPM);
    }

    #[test]
    fn onsets_snap_to_nearest_grid_point_ties_up() {
        let q =
            quantize(&midi(vec![on(59, 60), off(179, 60), on(61, 62), off(181, 62), on(60, 64), off(180, 64)], 181));
        let subbeats: Vec<(u8, u8)> = q.notes.iter().map(|n| (n.pitch, n.subbeat)).collect();
        assert_eq!(subbeats, vec![(60, 0), (62, 1), (64, 1)]);
    }

    #[test]
    fn empty_input_is_empty_piece() {
        let q = quantize(&midi(vec![], 0));
        assert_eq!(q, QuantizedPiece::empty(DEFAULT_TEMPO_BPM));
    }

    #[test]
    fn first_tempo_wins() {
        let events = vec![
            MidiEvent { tick: 0, kind: EventKind::Tempo { micros_per_quarter: 500_000 } },
            MidiEvent { tick: 10, kind: EventKind::Tempo { micros_per_quarter: 1_000_000 } },
        ];
        assert_eq!(quantize(&midi(events, 0)).tempo_bpm, 120);
    }

    #[test]
    fn unpaired_note_on_closes_at_end_with_flag() {
        let q = quantize(&midi(vec![on(0, 60)], 960));
        assert_eq!(q.notes, vec![Note::new(0, 0, 60, 72, 8)]);
        assert_eq!(q.diagnostics.unpaired_note_ons, 1);
    }

    #[test]
    fn durations_clamp_and_short_notes_are_counted() {
        let q = quantize(&midi(vec![on(0, 60), off(20, 60), on(0, 62), off(9600, 62)], 9600));
        assert_eq!(q.notes[0].duration, 1);
        assert_eq!(q.notes[1].duration, 16);
        assert_eq!(q.diagnostics.short_notes, 1);
        assert_eq!(q.bar_count, 5);
    }

    #[test]
    fn end_of_track_keeps_trailing_empty_bars() {
        let q = quantize(&midi(vec![on(0, 60), off(120, 60)], 4 * 1920));
        assert_eq!(q.bar_count, 4);
    }

    #[test]
    fn odd_resolution_rounds_in_integer_arithmetic() {
        let piece = MidiPiece { ticks_per_quarter: 97, events: vec![on(97, 60), off(194, 60)], end_tick: 194 };
        let q = quantize(&piece);
        assert_eq!((q.notes[0].subbeat, q.notes[0].duration), (4, 4));
    }
}
