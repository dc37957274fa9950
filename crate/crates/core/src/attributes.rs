//! Bar-level rhythmic intensity and polyphony, and their octile classes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::piece::{QuantizedPiece, SUBBEATS_PER_BAR};

pub const CLASS_COUNT: usize = 8;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BarAttributeScores {
    /// Fraction of the bar's sub-beats holding at least one onset.
    pub rhythmic_intensity: Vec<f64>,
    /// Mean number of notes struck or held per sub-beat.
    pub polyphony: Vec<f64>,
}

/// Per-bar classes 0..=7 under some [`AttributeBins`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributeClasses {
    pub rhythm_classes: Vec<u8>,
    pub polyphony_classes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AttributeError {
    #[error("cannot fit bins on an empty corpus")]
    EmptyCorpus,
}

pub fn rhythmic_intensity(piece: &QuantizedPiece) -> Vec<f64> {
    let mut hit = vec![[false; SUBBEATS_PER_BAR as usize]; piece.bar_count as usize];
    for note in &piece.notes {
        if let Some(bar) = hit.get_mut(note.bar as usize) {
            bar[usize::from(note.subbeat)] = true;
        }
    }
    hit.iter().map(|bar| bar.iter().filter(|&&h| h).count() as f64 / f64::from(SUBBEATS_PER_BAR)).collect()
}

/// Notes count toward every sub-beat in `[onset, onset + duration)`, so a
/// note held over a barline adds to the following bar too.
pub fn polyphony(piece: &QuantizedPiece) -> Vec<f64> {
    let slots = (piece.bar_count * SUBBEATS_PER_BAR) as usize;
    let mut delta = vec![0i64; slots + 1];
    for note in &piece.notes {
        let start = note.onset() as usize;
        if start >= slots {
            continue;
        }
        delta[start] += 1;
        delta[(note.end() as usize).min(slots)] -= 1;
    }
    let mut active = 0i64;
    let mut sums = vec![0i64; piece.bar_count as usize];
    for (slot, d) in delta.iter().take(slots).enumerate() {
        active += d;
        sums[slot / SUBBEATS_PER_BAR as usize] += active;
    }
    sums.into_iter().map(|s| s as f64 / f64::from(SUBBEATS_PER_BAR)).collect()
}

pub fn bar_scores(piece: &QuantizedPiece) -> BarAttributeScores {
    BarAttributeScores { rhythmic_intensity: rhythmic_intensity(piece), polyphony: polyphony(piece) }
}

/// Seven cut points splitting a score distribution into eight classes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OctileEdges(pub [f64; CLASS_COUNT - 1]);

impl OctileEdges {
    /// Nearest-rank 12.5%, 25%, ..., 87.5% quantiles of the pooled scores.
    pub fn fit(scores: &[f64]) -> Result<Self, AttributeError> {
        if scores.is_empty() {
            return Err(AttributeError::EmptyCorpus);
        }
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mut edges = [0.0; CLASS_COUNT - 1];
        for (k, edge) in edges.iter_mut().enumerate() {
            // ceil((k+1) * n / 8), exact in integers
            let rank = ((k + 1) * n).div_ceil(CLASS_COUNT);
            *edge = sorted[rank.max(1) - 1];
        }
        Ok(OctileEdges(edges))
    }

    /// Number of edges strictly below `score`.
    pub fn classify(&self, score: f64) -> u8 {
        self.0.iter().filter(|&&e| e < score).count() as u8
    }
}

/// Corpus-wide binning for both attributes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeBins {
    pub rhythm: OctileEdges,
    pub polyphony: OctileEdges,
}

impl AttributeBins {
    /// Pools every bar of every piece in the corpus.
    pub fn fit<'a>(corpus: impl IntoIterator<Item = &'a BarAttributeScores>) -> Result<Self, AttributeError> {
        let mut rhythm = Vec::new();
        let mut poly = Vec::new();
        for scores in corpus {
            rhythm.extend_from_slice(&scores.rhythmic_intensity);
            poly.extend_from_slice(&scores.polyphony);
        }
        Ok(AttributeBins { rhythm: OctileEdges::fit(&rhythm)?, polyphony: OctileEdges::fit(&poly)? })
    }

    pub fn classify(&self, scores: &BarAttributeScores) -> AttributeClasses {
        AttributeClasses {
            rhythm_classes: scores.rhythmic_intensity.iter().map(|&s| self.rhythm.classify(s)).collect(),
            polyphony_classes: scores.polyphony.iter().map(|&s| self.polyphony.classify(s)).collect(),
        }
    }
}

/// Fits bins over the corpus and classifies each of its pieces.
pub fn bin_attributes(corpus: &[BarAttributeScores]) -> Result<(AttributeBins, Vec<AttributeClasses>), AttributeError> {
    let bins = AttributeBins::fit(corpus)?;
    let classes = corpus.iter().map(|s| bins.classify(s)).collect();
    Ok((bins, classes))
}
