//! Seeded random fixtures: valid pieces, raw token streams and a small
//! corpus of pieces whose captions describe them.

use rand::Rng;

use crate::dataset::{PairExample, Polarity};
use crate::piece::{Note, QuantizedPiece, MAX_DURATION, MAX_TEMPO_BPM, MIN_TEMPO_BPM, SUBBEATS_PER_BAR};
use crate::remi::{detect_chords, encode, RemiSequence, VOCAB_SIZE};
use crate::remi::{TEMPO_MAX, TEMPO_MIN, TEMPO_STEP, VELOCITY_MAX, VELOCITY_MIN, VELOCITY_STEP};

/// A valid piece with 1..=`max_bars` bars and arbitrary in-range values.
pub fn random_piece(rng: &mut impl Rng, max_bars: u32) -> QuantizedPiece {
    let bars = rng.random_range(1..=max_bars);
    let count = rng.random_range(0..=bars as usize * 8);
    let notes = (0..count)
        .map(|_| {
            Note::new(
                rng.random_range(0..bars),
                rng.random_range(0..SUBBEATS_PER_BAR as u8),
                rng.random_range(0..128),
                rng.random_range(1..128),
                rng.random_range(1..=MAX_DURATION),
            )
        })
        .collect();
    QuantizedPiece::from_notes(notes, rng.random_range(MIN_TEMPO_BPM..=MAX_TEMPO_BPM), bars)
}

/// A valid piece whose tempo and velocities already sit on the token grid,
/// so encoding loses nothing.
pub fn random_grid_piece(rng: &mut impl Rng, max_bars: u32) -> QuantizedPiece {
    let mut piece = random_piece(rng, max_bars);
    let tempo_steps = (TEMPO_MAX - TEMPO_MIN) / TEMPO_STEP;
    piece.tempo_bpm = u32::from(TEMPO_MIN + TEMPO_STEP * rng.random_range(0..=tempo_steps));
    for note in &mut piece.notes {
        note.velocity =
            VELOCITY_MIN + VELOCITY_STEP * rng.random_range(0..=(VELOCITY_MAX - VELOCITY_MIN) / VELOCITY_STEP);
    }
    piece
}

/// Uniform vocabulary ids, length 0..=`max_len`.
pub fn random_token_stream(rng: &mut impl Rng, max_len: usize) -> RemiSequence {
    let len = rng.random_range(0..=max_len);
    let ids = (0..len).map(|_| rng.random_range(0..VOCAB_SIZE as u16)).collect();
    RemiSequence::from_ids(ids).expect("ids in range")
}

const TEMPOS: [(&str, u32); 4] = [("slow", 62), ("relaxed", 92), ("upbeat", 128), ("fast", 170)];
const REGISTERS: [(&str, u8); 4] = [("deep", 36), ("warm", 52), ("bright", 68), ("sparkling", 84)];
const DENSITIES: [(&str, u8); 2] = [("sparse", 4), ("busy", 2)];
/// Major-scale degrees used for melodies.
const SCALE: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];

/// Number of distinct (tempo, register, density) descriptions.
pub const DESCRIBED_KINDS: usize = TEMPOS.len() * REGISTERS.len() * DENSITIES.len();

/// A `bars`-bar piece and a caption naming its tempo, register and note
/// density, for combination `kind` (taken modulo [`DESCRIBED_KINDS`]).
/// `rng` varies the melody only.
pub fn described_piece(rng: &mut impl Rng, kind: usize, bars: u32) -> (QuantizedPiece, String) {
    let kind = kind % DESCRIBED_KINDS;
    let (tempo_word, tempo) = TEMPOS[kind % 4];
    let (register_word, base) = REGISTERS[(kind / 4) % 4];
    let (density_word, step) = DENSITIES[kind / 16];
    let mut notes = Vec::new();
    for bar in 0..bars {
        for subbeat in (0..SUBBEATS_PER_BAR as u8).step_by(step as usize) {
            let degree = SCALE[rng.random_range(0..SCALE.len())];
            notes.push(Note::new(bar, subbeat, base + degree, 80, step));
        }
    }
    let caption = format!("a {tempo_word} {density_word} tune in a {register_word} register");
    (QuantizedPiece::from_notes(notes, tempo, bars), caption)
}

/// `n` positive examples cycling through every description, one segment
/// each, with music already in token text form.
pub fn described_pairs(n: usize, bars: u32, seed: u64) -> Vec<PairExample> {
    let mut rng = crate::rng::seeded(seed);
    (0..n)
        .map(|k| {
            let (piece, caption) = described_piece(&mut rng, k, bars);
            let seq = encode(&piece, &detect_chords(&piece)).expect("generated pieces are valid");
            PairExample {
                segment_id: format!("toy#{k:04}"),
                music: seq.to_text(),
                caption,
                polarity: Polarity::Positive,
            }
        })
        .collect()
}
