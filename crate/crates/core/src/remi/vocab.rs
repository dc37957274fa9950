//! The 405-entry REMI event vocabulary.
//!
//! | family        | values                          | count |
//! |---------------|---------------------------------|-------|
//! | Bar           | -                               | 1     |
//! | Beat          | sub-beat 0..=15                 | 16    |
//! | Tempo         | 32..=224 bpm, step 3            | 65    |
//! | Note_Pitch    | 0..=127                         | 128   |
//! | Note_Velocity | 40..=126, step 2                | 44    |
//! | Note_Duration | 0..=16 sixteenths               | 17    |
//! | Chord         | 12 roots x 11 qualities, + N_N  | 133   |
//! | EOS           | -                               | 1     |
//!
//! Ids are assigned family by family in the order above, ascending by value
//! within a family.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub const VOCAB_SIZE: usize = 405;

pub const TEMPO_MIN: u16 = 32;
pub const TEMPO_MAX: u16 = 224;
pub const TEMPO_STEP: u16 = 3;
pub const VELOCITY_MIN: u8 = 40;
pub const VELOCITY_MAX: u8 = 126;
pub const VELOCITY_STEP: u8 = 2;
/// Ticks per sixteenth in the textual `Note_Duration_<ticks>` form.
pub const DURATION_TEXT_TICKS: u32 = 120;

const SUBBEAT_BASE: u16 = 1;
const TEMPO_BASE: u16 = SUBBEAT_BASE + 16;
const PITCH_BASE: u16 = TEMPO_BASE + 65;
const VELOCITY_BASE: u16 = PITCH_BASE + 128;
const DURATION_BASE: u16 = VELOCITY_BASE + 44;
const CHORD_BASE: u16 = DURATION_BASE + 17;
const EOS_ID: u16 = CHORD_BASE + 133;

pub const PITCH_CLASS_NAMES: [&str; 12] = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quality {
    Major,
    Minor,
    Dominant7,
    Major7,
    Minor7,
    HalfDiminished7,
    Diminished,
    Diminished7,
    Augmented,
    Sus2,
    Sus4,
}

impl Quality {
    pub const ALL: [Quality; 11] = [
        Quality::Major,
        Quality::Minor,
        Quality::Dominant7,
        Quality::Major7,
        Quality::Minor7,
        Quality::HalfDiminished7,
        Quality::Diminished,
        Quality::Diminished7,
        Quality::Augmented,
        Quality::Sus2,
        Quality::Sus4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quality::Major => "M",
            Quality::Minor => "m",
            Quality::Dominant7 => "7",
            Quality::Major7 => "M7",
            Quality::Minor7 => "m7",
            Quality::HalfDiminished7 => "m7b5",
            Quality::Diminished => "o",
            Quality::Diminished7 => "o7",
            Quality::Augmented => "+",
            Quality::Sus2 => "sus2",
            Quality::Sus4 => "sus4",
        }
    }

    /// Semitone offsets above the root.
    pub fn intervals(self) -> &'static [u8] {
        match self {
            Quality::Major => &[0, 4, 7],
            Quality::Minor => &[0, 3, 7],
            Quality::Dominant7 => &[0, 4, 7, 10],
            Quality::Major7 => &[0, 4, 7, 11],
            Quality::Minor7 => &[0, 3, 7, 10],
            Quality::HalfDiminished7 => &[0, 3, 6, 10],
            Quality::Diminished => &[0, 3, 6],
            Quality::Diminished7 => &[0, 3, 6, 9],
            Quality::Augmented => &[0, 4, 8],
            Quality::Sus2 => &[0, 2, 7],
            Quality::Sus4 => &[0, 5, 7],
        }
    }

    fn index(self) -> u16 {
        Quality::ALL.iter().position(|&q| q == self).unwrap() as u16
    }
}

/// Root and quality of a chord, or the "no chord" label `N_N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChordLabel {
    NoChord,
    Chord { root: u8, quality: Quality },
}

impl ChordLabel {
    pub fn new(root: u8, quality: Quality) -> Self {
        ChordLabel::Chord { root: root % 12, quality }
    }

    fn index(self) -> u16 {
        match self {
            ChordLabel::NoChord => 132,
            ChordLabel::Chord { root, quality } => u16::from(root % 12) * 11 + quality.index(),
        }
    }

    fn from_index(i: u16) -> Self {
        if i >= 132 {
            ChordLabel::NoChord
        } else {
            ChordLabel::Chord { root: (i / 11) as u8, quality: Quality::ALL[usize::from(i % 11)] }
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s == "N_N" {
            return Some(ChordLabel::NoChord);
        }
        let (root, quality) = s.split_once('_')?;
        let root = PITCH_CLASS_NAMES.iter().position(|&n| n == root)? as u8;
        let quality = *Quality::ALL.iter().find(|q| q.name() == quality)?;
        Some(ChordLabel::Chord { root, quality })
    }
}

impl fmt::Display for ChordLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ChordLabel::NoChord => f.write_str("N_N"),
            ChordLabel::Chord { root, quality } => {
                write!(f, "{}_{}", PITCH_CLASS_NAMES[usize::from(root % 12)], quality.name())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Bar,
    SubBeat,
    Tempo,
    Pitch,
    Velocity,
    Duration,
    Chord,
    Eos,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Bar,
        Family::SubBeat,
        Family::Tempo,
        Family::Pitch,
        Family::Velocity,
        Family::Duration,
        Family::Chord,
        Family::Eos,
    ];

    /// Event name used in the textual and JSON forms.
    pub fn name(self) -> &'static str {
        match self {
            Family::Bar => "Bar",
            Family::SubBeat => "Beat",
            Family::Tempo => "Tempo",
            Family::Pitch => "Note_Pitch",
            Family::Velocity => "Note_Velocity",
            Family::Duration => "Note_Duration",
            Family::Chord => "Chord",
            Family::Eos => "EOS",
        }
    }

    pub fn size(self) -> usize {
        match self {
            Family::Bar | Family::Eos => 1,
            Family::SubBeat => 16,
            Family::Tempo => 65,
            Family::Pitch => 128,
            Family::Velocity => 44,
            Family::Duration => 17,
            Family::Chord => 133,
        }
    }
}

/// One REMI event with its musical value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Token {
    Bar,
    SubBeat(u8),
    /// Beats per minute, on the 32..=224 step-3 grid.
    Tempo(u16),
    Pitch(u8),
    /// Even MIDI velocity in 40..=126.
    Velocity(u8),
    /// Sixteenths, 0..=16.
    Duration(u8),
    Chord(ChordLabel),
    Eos,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VocabError {
    #[error("token id {0} outside the {VOCAB_SIZE}-entry vocabulary")]
    UnknownId(u32),
    #[error("line {line}: unknown token {text:?}")]
    UnknownText { line: usize, text: String },
    #[error("event {index}: unknown event {name}={value}")]
    UnknownEvent { index: usize, name: String, value: String },
    #[error("malformed event JSON: {0}")]
    Json(String),
}

impl Token {
    pub fn family(self) -> Family {
        match self {
            Token::Bar => Family::Bar,
            Token::SubBeat(_) => Family::SubBeat,
            Token::Tempo(_) => Family::Tempo,
            Token::Pitch(_) => Family::Pitch,
            Token::Velocity(_) => Family::Velocity,
            Token::Duration(_) => Family::Duration,
            Token::Chord(_) => Family::Chord,
            Token::Eos => Family::Eos,
        }
    }

    /// Vocabulary id, or `None` for a value that is off its family's grid.
    pub fn try_id(self) -> Option<u16> {
        Some(match self {
            Token::Bar => 0,
            Token::SubBeat(s) if s < 16 => SUBBEAT_BASE + u16::from(s),
            Token::Tempo(t) if (TEMPO_MIN..=TEMPO_MAX).contains(&t) && (t - TEMPO_MIN).is_multiple_of(TEMPO_STEP) => {
                TEMPO_BASE + (t - TEMPO_MIN) / TEMPO_STEP
            }
            Token::Pitch(p) if p < 128 => PITCH_BASE + u16::from(p),
            Token::Velocity(v) if (VELOCITY_MIN..=VELOCITY_MAX).contains(&v) && v % VELOCITY_STEP == 0 => {
                VELOCITY_BASE + u16::from((v - VELOCITY_MIN) / VELOCITY_STEP)
            }
            Token::Duration(d) if d <= 16 => DURATION_BASE + u16::from(d),
            Token::Chord(c) => CHORD_BASE + c.index(),
            Token::Eos => EOS_ID,
            _ => return None,
        })
    }

    /// Vocabulary id.
    ///
    /// Panics for values off the family grid; build tokens through
    /// [`Token::tempo`] and [`Token::velocity`] to snap them first.
    pub fn id(self) -> u16 {
        self.try_id().unwrap_or_else(|| panic!("{self:?} is not in the vocabulary"))
    }

    pub fn from_id(id: u16) -> Option<Token> {
        Some(match id {
            0 => Token::Bar,
            i if i < TEMPO_BASE => Token::SubBeat((i - SUBBEAT_BASE) as u8),
            i if i < PITCH_BASE => Token::Tempo(TEMPO_MIN + (i - TEMPO_BASE) * TEMPO_STEP),
            i if i < VELOCITY_BASE => Token::Pitch((i - PITCH_BASE) as u8),
            i if i < DURATION_BASE => Token::Velocity(VELOCITY_MIN + (i - VELOCITY_BASE) as u8 * VELOCITY_STEP),
            i if i < CHORD_BASE => Token::Duration((i - DURATION_BASE) as u8),
            i if i < EOS_ID => Token::Chord(ChordLabel::from_index(i - CHORD_BASE)),
            EOS_ID => Token::Eos,
            _ => return None,
        })
    }

    /// Tempo token nearest to `bpm`, clamped to the grid.
    pub fn tempo(bpm: u32) -> Token {
        Token::Tempo(snap_tempo(bpm))
    }

    /// Velocity token for `velocity` snapped down to an even value in range.
    pub fn velocity(velocity: u8) -> Token {
        Token::Velocity(snap_velocity(velocity))
    }

    /// Value as it appears in the JSON event form.
    pub fn json_value(self) -> Value {
        match self {
            Token::Bar | Token::Eos => Value::Null,
            Token::SubBeat(s) => json!(s),
            Token::Tempo(t) => json!(t),
            Token::Pitch(p) => json!(p),
            Token::Velocity(v) => json!(v),
            Token::Duration(d) => json!(u32::from(d) * DURATION_TEXT_TICKS),
            Token::Chord(c) => json!(c.to_string()),
        }
    }
}

/// `NAME_VALUE` form, e.g. `Note_Pitch_64`, `Bar_None`, `Chord_C#_sus4`.
/// Durations print in ticks at 120 per sixteenth (`Note_Duration_840`).
impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self.family().name();
        match self.json_value() {
            Value::Null => write!(f, "{name}_None"),
            Value::String(s) => write!(f, "{name}_{s}"),
            v => write!(f, "{name}_{v}"),
        }
    }
}

pub fn snap_tempo(bpm: u32) -> u16 {
    let clamped = bpm.clamp(u32::from(TEMPO_MIN), u32::from(TEMPO_MAX));
    let step = u32::from(TEMPO_STEP);
    let k = (clamped - u32::from(TEMPO_MIN) + step / 2) / step;
    TEMPO_MIN + (k as u16) * TEMPO_STEP
}

pub fn snap_velocity(velocity: u8) -> u8 {
    (velocity - velocity % VELOCITY_STEP).clamp(VELOCITY_MIN, VELOCITY_MAX)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VocabEntry {
    pub id: u16,
    pub name: &'static str,
    pub value: Value,
}

/// The full vocabulary with lookups in both directions.
#[derive(Clone, Debug)]
pub struct RemiVocab {
    entries: Vec<VocabEntry>,
    by_text: HashMap<String, u16>,
}

pub fn build_vocab() -> RemiVocab {
    let entries: Vec<VocabEntry> = (0..VOCAB_SIZE as u16)
        .map(|id| {
            let token = Token::from_id(id).expect("every id below VOCAB_SIZE decodes");
            VocabEntry { id, name: token.family().name(), value: token.json_value() }
        })
        .collect();
    let by_text = (0..VOCAB_SIZE as u16).map(|id| (Token::from_id(id).unwrap().to_string(), id)).collect();
    RemiVocab { entries, by_text }
}

/// Shared instance of [`build_vocab`].
pub fn vocab() -> &'static RemiVocab {
    static VOCAB: OnceLock<RemiVocab> = OnceLock::new();
    VOCAB.get_or_init(build_vocab)
}

impl RemiVocab {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    pub fn family_size(&self, family: Family) -> usize {
        self.entries.iter().filter(|e| e.name == family.name()).count()
    }

    pub fn id_of_text(&self, text: &str) -> Option<u16> {
        self.by_text.get(text).copied()
    }

    /// Id of a `(name, value)` pair from the JSON event form.
    pub fn id_of_event(&self, name: &str, value: &Value) -> Option<u16> {
        let key = match value {
            Value::Null => format!("{name}_None"),
            Value::String(s) => format!("{name}_{s}"),
            Value::Number(n) => format!("{name}_{n}"),
            _ => return None,
        };
        self.id_of_text(&key)
    }

    pub fn token(&self, id: u16) -> Option<Token> {
        Token::from_id(id)
    }
}
