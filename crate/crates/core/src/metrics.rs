//! Objective metrics over a decoded piece.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attributes::{polyphony, rhythmic_intensity};
use crate::piece::QuantizedPiece;
use crate::remi::ChordLabel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Share of notes at least one sixteenth long before clamping; 0 for a
    /// piece without notes.
    pub qualified_notes_rate: f64,
    pub empty_bar_rate: f64,
    pub pitch_min: Option<u8>,
    pub pitch_max: Option<u8>,
    pub pitch_space: Option<u8>,
    pub unique_pitches_per_bar: f64,
    /// Adjacent equal chord labels over adjacent pairs.
    pub chord_repetition: f64,
    pub polyphonicity: f64,
    pub rhythmic_intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("piece has no bars to evaluate")]
    NoBars,
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

pub fn evaluate(piece: &QuantizedPiece, chords: &[ChordLabel]) -> Result<MetricsReport, MetricsError> {
    if piece.bar_count == 0 {
        return Err(MetricsError::NoBars);
    }
    let bars = piece.bar_count as usize;
    let total = piece.notes.len();
    let short = (piece.diagnostics.short_notes as usize).min(total);
    let qualified_notes_rate = if total == 0 { 0.0 } else { (total - short) as f64 / total as f64 };

    let mut per_bar: Vec<BTreeSet<u8>> = vec![BTreeSet::new(); bars];
    for note in &piece.notes {
        if let Some(set) = per_bar.get_mut(note.bar as usize) {
            set.insert(note.pitch);
        }
    }
    let empty = per_bar.iter().filter(|s| s.is_empty()).count();
    let unique: Vec<f64> = per_bar.iter().map(|s| s.len() as f64).collect();

    let pitch_min = piece.notes.iter().map(|n| n.pitch).min();
    let pitch_max = piece.notes.iter().map(|n| n.pitch).max();
    let pitch_space = pitch_min.zip(pitch_max).map(|(lo, hi)| hi - lo);

    let chord_repetition = if chords.len() < 2 {
        0.0
    } else {
        let repeats = chords.windows(2).filter(|w| w[0] == w[1]).count();
        repeats as f64 / (chords.len() - 1) as f64
    };

    Ok(MetricsReport {
        qualified_notes_rate,
        empty_bar_rate: empty as f64 / bars as f64,
        pitch_min,
        pitch_max,
        pitch_space,
        unique_pitches_per_bar: mean(&unique),
        chord_repetition,
        polyphonicity: mean(&polyphony(piece)),
        rhythmic_intensity: mean(&rhythmic_intensity(piece)),
    })
}

impl MetricsReport {
    /// Two aligned columns, one metric per row.
    pub fn to_table(&self) -> String {
        let opt = |v: Option<u8>| v.map_or_else(|| "-".to_string(), |p| p.to_string());
        let rows = [
            ("qualified_notes_rate", format!("{:.4}", self.qualified_notes_rate)),
            ("empty_bar_rate", format!("{:.4}", self.empty_bar_rate)),
            ("pitch_min", opt(self.pitch_min)),
            ("pitch_max", opt(self.pitch_max)),
            ("pitch_space", opt(self.pitch_space)),
            ("unique_pitches_per_bar", format!("{:.4}", self.unique_pitches_per_bar)),
            ("chord_repetition", format!("{:.4}", self.chord_repetition)),
            ("polyphonicity", format!("{:.4}", self.polyphonicity)),
            ("rhythmic_intensity", format!("{:.4}", self.rhythmic_intensity)),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v:>10}");
        }
        out
    }
}
