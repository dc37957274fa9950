//! REMI event vocabulary, codec, chord labelling and repair of generated streams.

mod chord;
mod codec;
mod repair;
mod sequence;
mod vocab;

pub use chord::{detect_chords, label_window, pitch_class_weights, template_score, CHORD_WINDOW};
pub use codec::{decode, encode, snap_to_vocab, DecodeError, Decoded, EncodeError, Problem, TokenText};
pub use repair::{repair, repair_with_report, RepairReport, DEFAULT_DURATION, DEFAULT_TEMPO, DEFAULT_VELOCITY};
pub use sequence::RemiSequence;
pub use vocab::{
    build_vocab, snap_tempo, snap_velocity, vocab, ChordLabel, Family, Quality, RemiVocab, Token, VocabEntry,
    VocabError, DURATION_TEXT_TICKS, PITCH_CLASS_NAMES, TEMPO_MAX, TEMPO_MIN, TEMPO_STEP, VELOCITY_MAX, VELOCITY_MIN,
    VELOCITY_STEP, VOCAB_SIZE,
};
