//! Template-matching chord labelling over half-bar windows.

use super::vocab::{ChordLabel, Quality};
use crate::piece::{QuantizedPiece, SUBBEATS_PER_BAR};

/// Sub-beats per chord window.
pub const CHORD_WINDOW: u32 = SUBBEATS_PER_BAR / 2;

/// Duration-weighted pitch-class histogram of the notes sounding in
/// `[start, start + len)` grid positions.
pub fn pitch_class_weights(piece: &QuantizedPiece, start: u32, len: u32) -> [u32; 12] {
    let end = start + len;
    let mut weights = [0u32; 12];
    for note in &piece.notes {
        let lo = note.onset().max(start);
        let hi = note.end().min(end);
        if hi > lo {
            weights[usize::from(note.pitch % 12)] += hi - lo;
        }
    }
    weights
}

/// Template score scaled by the number of sounding pitch classes so that it
/// stays integral: every sounding template tone counts for its weight, every
/// sounding non-template tone against it, and every silent template tone
/// costs the mean weight of the sounding ones.
pub fn template_score(weights: &[u32; 12], root: u8, quality: Quality) -> i64 {
    let sounding = weights.iter().filter(|&&w| w > 0).count() as i64;
    let total: i64 = weights.iter().map(|&w| i64::from(w)).sum();
    let mut matched = 0i64;
    let mut missing = 0i64;
    for &interval in quality.intervals() {
        let w = i64::from(weights[usize::from((root + interval) % 12)]);
        matched += w;
        if w == 0 {
            missing += 1;
        }
    }
    sounding * (matched - (total - matched)) - missing * total
}

/// Best label for a pitch-class histogram; `N_N` when fewer than two pitch
/// classes sound. Ties go to the lower root, then the earlier quality in
/// [`Quality::ALL`].
pub fn label_window(weights: &[u32; 12]) -> ChordLabel {
    if weights.iter().filter(|&&w| w > 0).count() < 2 {
        return ChordLabel::NoChord;
    }
    let mut best: Option<(i64, ChordLabel)> = None;
    for root in 0..12u8 {
        for quality in Quality::ALL {
            let score = template_score(weights, root, quality);
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, ChordLabel::new(root, quality)));
            }
        }
    }
    best.map(|(_, label)| label).unwrap_or(ChordLabel::NoChord)
}

/// One label per half bar, `2 * bar_count` in total.
pub fn detect_chords(piece: &QuantizedPiece) -> Vec<ChordLabel> {
    (0..piece.bar_count * 2)
        .map(|w| label_window(&pitch_class_weights(piece, w * CHORD_WINDOW, CHORD_WINDOW)))
        .collect()
}
