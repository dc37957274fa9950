//! Standard MIDI File I/O and sixteenth-note quantization.

mod quantize;
mod smf;

pub use quantize::{micros_to_bpm, quantize, quantize_with_tempo, DEFAULT_TEMPO_BPM};
pub use smf::{parse_smf, write_smf, EventKind, MidiEvent, MidiPiece, SmfError, OUTPUT_TICKS_PER_QUARTER};
