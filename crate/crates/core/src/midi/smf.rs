//! Standard MIDI File reading and writing.
//!
//! Reading accepts format 0 and 1 files with metrical timing, honours running
//! status, and keeps only note and set-tempo events. Writing always produces a
//! single-track format 0 file at 480 ticks per quarter without running status.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::piece::{PieceError, QuantizedPiece, SUBBEATS_PER_BAR};

/// Resolution used for every file this crate writes.
pub const OUTPUT_TICKS_PER_QUARTER: u16 = 480;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    NoteOn { channel: u8, pitch: u8, velocity: u8 },
    NoteOff { channel: u8, pitch: u8, velocity: u8 },
    Tempo { micros_per_quarter: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MidiEvent {
    pub tick: u64,
    pub kind: EventKind,
}

/// The note and tempo content of a Standard MIDI File, all tracks merged.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MidiPiece {
    pub ticks_per_quarter: u16,
    /// Sorted by tick; events sharing a tick keep track order, then file order.
    pub events: Vec<MidiEvent>,
    /// Latest end-of-track (or event) tick over all tracks.
    pub end_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmfError {
    #[error("malformed header at byte {offset}: {reason}")]
    BadHeader { offset: usize, reason: &'static str },
    #[error("unsupported SMF format {format}")]
    UnsupportedFormat { format: u16 },
    #[error("truncated data at byte {offset}")]
    Truncated { offset: usize },
    #[error("data byte {byte:#04x} at byte {offset} with no running status")]
    RunningStatus { offset: usize, byte: u8 },
    #[error("variable-length quantity longer than 4 bytes at byte {offset}")]
    InvalidVlq { offset: usize },
    #[error("invalid event {status:#04x} at byte {offset}")]
    BadEvent { offset: usize, status: u8 },
}

impl SmfError {
    /// Byte offset in the input at which decoding failed, if any.
    pub fn offset(&self) -> Option<usize> {
        match *self {
            SmfError::UnsupportedFormat { .. } => None,
            SmfError::BadHeader { offset, .. }
            | SmfError::Truncated { offset }
            | SmfError::RunningStatus { offset, .. }
            | SmfError::InvalidVlq { offset }
            | SmfError::BadEvent { offset, .. } => Some(offset),
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    end: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], pos: usize, end: usize) -> Self {
        Cursor { bytes, pos, end }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.end
    }

    fn u8(&mut self) -> Result<u8, SmfError> {
        if self.pos >= self.end {
            return Err(SmfError::Truncated { offset: self.pos });
        }
        let b = self.bytes[self.pos];
        self.pos += 1;
        Ok(b)
    }

    fn peek(&self) -> Result<u8, SmfError> {
        if self.pos >= self.end {
            return Err(SmfError::Truncated { offset: self.pos });
        }
        Ok(self.bytes[self.pos])
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], SmfError> {
        if self.end - self.pos < n {
            return Err(SmfError::Truncated { offset: self.pos });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, SmfError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, SmfError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32, SmfError> {
        let start = self.pos;
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | u32::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(SmfError::InvalidVlq { offset: start })
    }

    fn data_byte(&mut self, status: u8) -> Result<u8, SmfError> {
        let offset = self.pos;
        let b = self.u8()?;
        if b & 0x80 != 0 {
            return Err(SmfError::BadEvent { offset, status });
        }
        Ok(b)
    }
}

/// Parses a format 0 or 1 Standard MIDI File.
pub fn parse_smf(bytes: &[u8]) -> Result<MidiPiece, SmfError> {
    let mut cur = Cursor::new(bytes, 0, bytes.len());
    let magic = cur.take(4).map_err(|_| SmfError::BadHeader { offset: 0, reason: "missing MThd" })?;
    if magic != b"MThd" {
        return Err(SmfError::BadHeader { offset: 0, reason: "missing MThd" });
    }
    let header_len = cur.u32()? as usize;
    if header_len < 6 {
        return Err(SmfError::BadHeader { offset: 4, reason: "header chunk shorter than 6 bytes" });
    }
    let header_start = cur.pos;
    let format = cur.u16()?;
    let _track_count = cur.u16()?;
    let division = cur.u16()?;
    if format > 1 {
        return Err(SmfError::UnsupportedFormat { format });
    }
    if division & 0x8000 != 0 {
        return Err(SmfError::BadHeader { offset: header_start + 4, reason: "SMPTE timing is not supported" });
    }
    if division == 0 {
        return Err(SmfError::BadHeader { offset: header_start + 4, reason: "zero ticks per quarter" });
    }
    cur.take(header_len - 6)?;

    let mut tagged: Vec<(u64, usize, MidiEvent)> = Vec::new();
    let mut end_tick = 0u64;
    let mut track_index = 0usize;
    while !cur.at_end() {
        let chunk_start = cur.pos;
        let id = cur.take(4)?;
        let len = cur.u32()? as usize;
        let body = cur.pos;
        if bytes.len() - body < len {
            return Err(SmfError::Truncated { offset: chunk_start });
        }
        cur.pos += len;
        if id != b"MTrk" {
            continue;
        }
        let track_end = parse_track(&mut Cursor::new(bytes, body, body + len), |event| {
            tagged.push((event.tick, track_index, event));
        })?;
        end_tick = end_tick.max(track_end);
        track_index += 1;
    }
    // stable: equal ticks keep (track, file) order
    tagged.sort_by_key(|&(tick, track, _)| (tick, track));
    let events: Vec<MidiEvent> = tagged.into_iter().map(|(_, _, e)| e).collect();
    if let Some(last) = events.last() {
        end_tick = end_tick.max(last.tick);
    }
    Ok(MidiPiece { ticks_per_quarter: division, events, end_tick })
}

/// Decodes one MTrk body, returning the end-of-track tick.
fn parse_track(cur: &mut Cursor<'_>, mut emit: impl FnMut(MidiEvent)) -> Result<u64, SmfError> {
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    while !cur.at_end() {
        tick += u64::from(cur.vlq()?);
        let offset = cur.pos;
        let first = cur.peek()?;
        let status = if first & 0x80 != 0 {
            cur.pos += 1;
            first
        } else {
            running.ok_or(SmfError::RunningStatus { offset, byte: first })?
        };
        match status {
            0x80..=0xef => {
                running = Some(status);
                let channel = status & 0x0f;
                match status & 0xf0 {
                    0x80 | 0x90 => {
                        let pitch = cur.data_byte(status)?;
                        let velocity = cur.data_byte(status)?;
                        let kind = if status & 0xf0 == 0x90 && velocity > 0 {
                            EventKind::NoteOn { channel, pitch, velocity }
                        } else {
                            EventKind::NoteOff { channel, pitch, velocity }
                        };
                        emit(MidiEvent { tick, kind });
                    }
                    0xc0 | 0xd0 => {
                        cur.data_byte(status)?;
                    }
                    _ => {
                        cur.data_byte(status)?;
                        cur.data_byte(status)?;
                    }
                }
            }
            0xff => {
                running = None;
                let meta_type = cur.u8()?;
                let len = cur.vlq()? as usize;
                let data = cur.take(len)?;
                match meta_type {
                    0x2f => return Ok(tick),
                    0x51 if len == 3 => {
                        let micros_per_quarter = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        emit(MidiEvent { tick, kind: EventKind::Tempo { micros_per_quarter } });
                    }
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = cur.vlq()? as usize;
                cur.take(len)?;
            }
            _ => return Err(SmfError::BadEvent { offset, status }),
        }
    }
    Ok(tick)
}

fn push_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 5];
    let mut i = buf.len() - 1;
    buf[i] = (value & 0x7f) as u8;
    value >>= 7;
    while value > 0 {
        i -= 1;
        buf[i] = (value & 0x7f) as u8 | 0x80;
        value >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}

/// Writes a piece as a format 0 file with one set-tempo event at tick 0.
pub fn write_smf(piece: &QuantizedPiece) -> Result<Vec<u8>, PieceError> {
    piece.validate()?;
    let subbeat_ticks = u64::from(OUTPUT_TICKS_PER_QUARTER) / 4;

    // (tick, note-off before note-on, original order, bytes)
    let mut events: Vec<(u64, u8, usize, [u8; 3])> = Vec::with_capacity(piece.notes.len() * 2);
    let mut last_tick = 0u64;
    for (i, note) in piece.notes.iter().enumerate() {
        let on = u64::from(note.onset()) * subbeat_ticks;
        let off = u64::from(note.end()) * subbeat_ticks;
        events.push((on, 1, i, [0x90, note.pitch, note.velocity]));
        events.push((off, 0, i, [0x80, note.pitch, 0x40]));
        last_tick = last_tick.max(off);
    }
    events.sort_by_key(|&(tick, class, i, _)| (tick, class, i));
    let end_tick = last_tick.max(u64::from(piece.bar_count * SUBBEATS_PER_BAR) * subbeat_ticks);

    let mut track = Vec::with_capacity(events.len() * 4 + 16);
    let micros = (60_000_000f64 / f64::from(piece.tempo_bpm)).round() as u32;
    let micros = micros.min(0x00ff_ffff);
    push_vlq(&mut track, 0);
    track.extend_from_slice(&[0xff, 0x51, 0x03]);
    track.extend_from_slice(&micros.to_be_bytes()[1..]);
    let mut now = 0u64;
    for (tick, _, _, bytes) in &events {
        push_vlq(&mut track, (tick - now) as u32);
        track.extend_from_slice(bytes);
        now = *tick;
    }
    push_vlq(&mut track, (end_tick - now) as u32);
    track.extend_from_slice(&[0xff, 0x2f, 0x00]);

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&OUTPUT_TICKS_PER_QUARTER.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(format: u16, tracks: u16, division: u16) -> Vec<u8> {
        let mut v = b"MThd".to_vec();
        v.extend_from_slice(&6u32.to_be_bytes());
        v.extend_from_slice(&format.to_be_bytes());
        v.extend_from_slice(&tracks.to_be_bytes());
        v.extend_from_slice(&division.to_be_bytes());
        v
    }

    fn with_track(mut file: Vec<u8>, body: &[u8]) -> Vec<u8> {
        file.extend_from_slice(b"MTrk");
        file.extend_from_slice(&(body.len() as u32).to_be_bytes());
        file.extend_from_slice(body);
        file
    }

    #[test]
    fn vlq_encoding_matches_reference_values() {
        for (value, expected) in [
            (0u32, vec![0x00]),
            (0x40, vec![0x40]),
            (0x7f, vec![0x7f]),
            (0x80, vec![0x81, 0x00]),
            (0x2000, vec![0xc0, 0x00]),
            (0x3fff, vec![0xff, 0x7f]),
            (0x4000, vec![0x81, 0x80, 0x00]),
            (0x0fff_ffff, vec![0xff, 0xff, 0xff, 0x7f]),
        ] {
            let mut out = Vec::new();
            push_vlq(&mut out, value);
            assert_eq!(out, expected, "{value:#x}");
            let mut cur = Cursor::new(&out, 0, out.len());
            assert_eq!(cur.vlq().unwrap(), value);
        }
    }

    #[test]
    fn running_status_is_honoured() {
        // note-on C4, then a running-status note-on with velocity 0 (= note-off)
        let body = [0x00, 0x90, 60, 72, 0x83, 0x60, 60, 0, 0x00, 0xff, 0x2f, 0x00];
        let piece = parse_smf(&with_track(header(0, 1, 480), &body)).unwrap();
        assert_eq!(piece.events.len(), 2);
        assert_eq!(piece.events[1].tick, 480);
        assert!(matches!(piece.events[1].kind, EventKind::NoteOff { pitch: 60, .. }));
    }

    #[test]
    fn data_byte_without_status_is_an_error() {
        let body = [0x00, 60, 72, 0x00, 0xff, 0x2f, 0x00];
        let file = with_track(header(0, 1, 480), &body);
        let err = parse_smf(&file).unwrap_err();
        assert_eq!(err, SmfError::RunningStatus { offset: 23, byte: 60 });
    }

    #[test]
    fn meta_event_cancels_running_status() {
        let body = [0x00, 0x90, 60, 72, 0x00, 0xff, 0x01, 0x00, 0x00, 60, 0];
        let err = parse_smf(&with_track(header(0, 1, 480), &body)).unwrap_err();
        assert!(matches!(err, SmfError::RunningStatus { .. }));
    }

    #[test]
    fn header_errors() {
        assert!(matches!(parse_smf(b"RIFF"), Err(SmfError::BadHeader { offset: 0, .. })));
        assert!(matches!(parse_smf(b""), Err(SmfError::BadHeader { .. })));
        assert_eq!(parse_smf(&header(2, 1, 480)), Err(SmfError::UnsupportedFormat { format: 2 }));
        assert!(matches!(parse_smf(&header(0, 1, 0xe728)), Err(SmfError::BadHeader { offset: 12, .. })));
        assert!(matches!(parse_smf(&header(0, 1, 480)[..10]), Err(SmfError::Truncated { .. })));
    }

    #[test]
    fn truncated_track_chunk() {
        let mut file = header(0, 1, 480);
        file.extend_from_slice(b"MTrk");
        file.extend_from_slice(&100u32.to_be_bytes());
        file.extend_from_slice(&[0x00, 0x90, 60]);
        assert_eq!(parse_smf(&file), Err(SmfError::Truncated { offset: 14 }));
    }

    #[test]
    fn skips_controllers_program_changes_and_sysex() {
        let body = [
            0x00, 0xb0, 7, 100, // CC
            0x00, 0xc0, 5, // program change
            0x00, 0xf0, 0x02, 0x7e, 0xf7, // sysex
            0x00, 0xe0, 0x00, 0x40, // pitch bend
            0x00, 0x91, 64, 90, 0x60, 0x81, 64, 0, 0x00, 0xff, 0x2f, 0x00,
        ];
        let piece = parse_smf(&with_track(header(0, 1, 96), &body)).unwrap();
        assert_eq!(piece.events.len(), 2);
        assert_eq!(piece.events[0].kind, EventKind::NoteOn { channel: 1, pitch: 64, velocity: 90 });
        assert_eq!(piece.end_tick, 96);
    }

    #[test]
    fn format1_tracks_merge_by_tick_and_skip_unknown_chunks() {
        let conductor = [0x00, 0xff, 0x51, 0x03, 0x07, 0xa1, 0x20, 0x00, 0xff, 0x2f, 0x00];
        let notes = [0x00, 0x90, 60, 72, 0x83, 0x60, 0x80, 60, 0, 0x00, 0xff, 0x2f, 0x00];
        let mut file = with_track(header(1, 2, 480), &conductor);
        file.extend_from_slice(b"XFIH");
        file.extend_from_slice(&2u32.to_be_bytes());
        file.extend_from_slice(&[1, 2]);
        let file = with_track(file, &notes);
        let piece = parse_smf(&file).unwrap();
        assert_eq!(piece.events.len(), 3);
        assert_eq!(piece.events[0].kind, EventKind::Tempo { micros_per_quarter: 500_000 });
        assert!(matches!(piece.events[1].kind, EventKind::NoteOn { .. }));
    }

    #[test]
    fn written_file_has_no_running_status_and_single_tempo() {
        let piece = QuantizedPiece::from_notes(
            vec![crate::piece::Note::new(0, 0, 60, 72, 4), crate::piece::Note::new(0, 0, 64, 72, 4)],
            120,
            1,
        );
        let bytes = write_smf(&piece).unwrap();
        let parsed = parse_smf(&bytes).unwrap();
        let tempos = parsed.events.iter().filter(|e| matches!(e.kind, EventKind::Tempo { .. })).count();
        assert_eq!(tempos, 1);
        assert_eq!(parsed.events.len(), 5);
        assert_eq!(parsed.end_tick, 1920);
        // every channel event carries an explicit status byte
        let statuses = bytes.windows(3).filter(|w| w[0] == 0x90 || w[0] == 0x80).count();
        assert_eq!(statuses, 4);
    }
}
