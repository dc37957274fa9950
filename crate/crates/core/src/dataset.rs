//! Contrastive training data: fixed-length segments, positive/negative
//! caption pairing, seeded splits and JSONL persistence.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attributes::{bar_scores, AttributeBins};
use crate::piece::QuantizedPiece;
use crate::remi::{decode, detect_chords, encode, DecodeError, EncodeError, RemiSequence};
use crate::rng::seeded;

pub const DEFAULT_SEGMENT_BARS: u32 = 16;
/// Train, validation and test shares in tenths.
pub const SPLIT_TENTHS: [usize; 3] = [8, 1, 1];
pub const MIN_SPLIT_EXAMPLES: usize = 10;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("piece {piece_id}: review {review_id} not found")]
    MissingReview { piece_id: String, review_id: String },
    #[error("piece {piece_id} has no review ids")]
    NoReviews { piece_id: String },
    #[error("no negative pool: every review belongs to piece {piece_id}")]
    NoNegativePool { piece_id: String },
    #[error("splitting needs at least {MIN_SPLIT_EXAMPLES} examples, got {0}")]
    TooFewExamples(usize),
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A piece in training form: REMI tokens, per-bar attribute classes and the
/// ids of the reviews that describe it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedPiece {
    pub piece_id: String,
    pub seq: RemiSequence,
    pub rhythm_classes: Vec<u8>,
    pub polyphony_classes: Vec<u8>,
    pub review_ids: Vec<String>,
}

impl TokenizedPiece {
    /// Encodes with detected half-bar chords and classifies bar attributes
    /// under corpus-wide `bins`.
    pub fn from_piece(
        piece_id: impl Into<String>,
        piece: &QuantizedPiece,
        bins: &AttributeBins,
        review_ids: Vec<String>,
    ) -> Result<Self, DatasetError> {
        let seq = encode(piece, &detect_chords(piece))?;
        let classes = bins.classify(&bar_scores(piece));
        Ok(TokenizedPiece {
            piece_id: piece_id.into(),
            seq,
            rhythm_classes: classes.rhythm_classes,
            polyphony_classes: classes.polyphony_classes,
            review_ids,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub segment_id: String,
    /// The segment's content; `piece_id` still names the source piece.
    pub piece: TokenizedPiece,
}

/// Cuts a piece into consecutive, non-overlapping windows of `bars` bars,
/// dropping a shorter tail. Each window is re-encoded on its own, so it
/// carries its own tempo and opening chord.
pub fn segment(piece: &TokenizedPiece, bars: u32) -> Result<Vec<Segment>, DatasetError> {
    let decoded = decode(&piece.seq)?;
    let count = decoded.piece.bar_count / bars.max(1);
    let mut out = Vec::with_capacity(count as usize);
    for k in 0..count {
        let start = k * bars;
        let part = decoded.piece.slice_bars(start, bars);
        let w0 = (start * 2) as usize;
        let chords = &decoded.chords[w0..w0 + (bars * 2) as usize];
        let range = start as usize..(start + bars) as usize;
        out.push(Segment {
            segment_id: format!("{}#{k:04}", piece.piece_id),
            piece: TokenizedPiece {
                piece_id: piece.piece_id.clone(),
                seq: encode(&part, chords)?,
                rhythm_classes: piece.rhythm_classes.get(range.clone()).map(<[u8]>::to_vec).unwrap_or_default(),
                polyphony_classes: piece.polyphony_classes.get(range).map(<[u8]>::to_vec).unwrap_or_default(),
                review_ids: piece.review_ids.clone(),
            },
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

/// One (music, caption) training tuple.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairExample {
    pub segment_id: String,
    /// The segment's tokens in line-per-token text form.
    pub music: String,
    pub caption: String,
    pub polarity: Polarity,
}

/// For every (segment, review of its piece): the true caption as a positive,
/// and a caption drawn uniformly from reviews of *other* pieces as a
/// negative. Deterministic in `seed`.
pub fn build_pairs(
    segments: &[Segment],
    reviews: &BTreeMap<String, String>,
    seed: u64,
) -> Result<Vec<PairExample>, DatasetError> {
    let mut rng = seeded(seed);
    let mut pools: HashMap<&str, Vec<&str>> = HashMap::new();
    let mut out = Vec::with_capacity(segments.len() * 2);
    for seg in segments {
        let piece = &seg.piece;
        if piece.review_ids.is_empty() {
            return Err(DatasetError::NoReviews { piece_id: piece.piece_id.clone() });
        }
        let pool = pools.entry(&piece.piece_id).or_insert_with(|| {
            let own: BTreeSet<&str> = piece.review_ids.iter().map(String::as_str).collect();
            reviews.keys().map(String::as_str).filter(|id| !own.contains(id)).collect()
        });
        if pool.is_empty() {
            return Err(DatasetError::NoNegativePool { piece_id: piece.piece_id.clone() });
        }
        let music = seg.piece.seq.to_text();
        for review_id in &piece.review_ids {
            let caption = reviews.get(review_id).ok_or_else(|| DatasetError::MissingReview {
                piece_id: piece.piece_id.clone(),
                review_id: review_id.clone(),
            })?;
            out.push(PairExample {
                segment_id: seg.segment_id.clone(),
                music: music.clone(),
                caption: caption.clone(),
                polarity: Polarity::Positive,
            });
            let negative = pool[rng.random_range(0..pool.len())];
            out.push(PairExample {
                segment_id: seg.segment_id.clone(),
                music: music.clone(),
                caption: reviews[negative].clone(),
                polarity: Polarity::Negative,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSet {
    pub train: Vec<PairExample>,
    pub validation: Vec<PairExample>,
    pub test: Vec<PairExample>,
    pub seed: u64,
}

/// Bucket sizes for `n` items in the 8:1:1 ratio by largest remainder, so
/// each bucket is within one item of its exact share.
pub fn split_sizes(n: usize) -> [usize; 3] {
    let mut sizes = SPLIT_TENTHS.map(|t| n * t / 10);
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by_key(|&i| std::cmp::Reverse((n * SPLIT_TENTHS[i]) % 10));
    let assigned: usize = sizes.iter().sum();
    for &i in order.iter().take(n - assigned) {
        sizes[i] += 1;
    }
    sizes
}

/// Shuffles segment ids with `seed` and assigns them 80/10/10 to train,
/// validation and test; every example follows its segment.
pub fn split(examples: &[PairExample], seed: u64) -> Result<SplitSet, DatasetError> {
    if examples.len() < MIN_SPLIT_EXAMPLES {
        return Err(DatasetError::TooFewExamples(examples.len()));
    }
    let mut seen = BTreeSet::new();
    let mut ids: Vec<&str> = examples.iter().map(|e| e.segment_id.as_str()).filter(|id| seen.insert(*id)).collect();
    ids.shuffle(&mut seeded(seed));
    let [n_train, n_val, _] = split_sizes(ids.len());
    let bucket: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            (
                *id,
                if i < n_train {
                    0
                } else if i < n_train + n_val {
                    1
                } else {
                    2
                },
            )
        })
        .collect();
    let mut parts = [Vec::new(), Vec::new(), Vec::new()];
    for e in examples {
        parts[bucket[e.segment_id.as_str()]].push(e.clone());
    }
    let [train, validation, test] = parts;
    Ok(SplitSet { train, validation, test, seed })
}

pub fn write_jsonl_to(mut writer: impl Write, examples: &[PairExample]) -> Result<(), DatasetError> {
    for e in examples {
        serde_json::to_writer(&mut writer, e).map_err(io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads one example per line; blank lines are skipped.
pub fn read_jsonl_from(reader: impl Read) -> Result<Vec<PairExample>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let example =
            serde_json::from_str(&line).map_err(|e| DatasetError::Json { line: i + 1, message: e.to_string() })?;
        out.push(example);
    }
    Ok(out)
}

pub fn write_jsonl(path: impl AsRef<Path>, examples: &[PairExample]) -> Result<(), DatasetError> {
    write_jsonl_to(BufWriter::new(File::create(path)?), examples)
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<PairExample>, DatasetError> {
    read_jsonl_from(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::piece::Note;

    fn tokenized(id: &str, bars: u32, reviews: &[&str]) -> TokenizedPiece {
        let notes = (0..bars).map(|b| Note::new(b, (b % 16) as u8, 60 + (b % 12) as u8, 80, 4)).collect();
        let piece = QuantizedPiece::from_notes(notes, 120, bars);
        let bins = AttributeBins::fit([&bar_scores(&piece)]).unwrap();
        TokenizedPiece::from_piece(id, &piece, &bins, reviews.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn reviews(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn segment_counts() {
        assert_eq!(segment(&tokenized("a", 35, &["r"]), 16).unwrap().len(), 2);
        assert_eq!(segment(&tokenized("a", 15, &["r"]), 16).unwrap().len(), 0);
        let p = tokenized("a", 16, &["r"]);
        let segs = segment(&p, 16).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].piece.seq, p.seq);
        assert_eq!(segs[0].piece.rhythm_classes, p.rhythm_classes);
    }

    #[test]
    fn later_segments_are_rerooted() {
        let p = tokenized("a", 35, &["r"]);
        let segs = segment(&p, 16).unwrap();
        let second = &segs[1].piece.seq;
        assert_eq!(second.bar_positions().len(), 16);
        assert_eq!(second.bar_positions()[0], 0);
        let d = decode(second).unwrap();
        assert_eq!(d.piece.tempo_bpm, 119);
        assert_eq!(d.piece.notes[0], Note::new(0, 0, 64, 80, 4));
        assert_eq!(segs[1].piece.rhythm_classes, p.rhythm_classes[16..32]);
        assert_eq!(segs[1].segment_id, "a#0001");
    }

    #[test]
    fn two_pieces_pair_with_each_other() {
        let segs: Vec<Segment> = [tokenized("a", 16, &["ra"]), tokenized("b", 16, &["rb"])]
            .iter()
            .flat_map(|p| segment(p, 16).unwrap())
            .collect();
        let revs = reviews(&[("ra", "happy pop"), ("rb", "sad ballad")]);
        let pairs = build_pairs(&segs, &revs, 1).unwrap();
        let captions: Vec<(&str, Polarity)> = pairs.iter().map(|p| (p.caption.as_str(), p.polarity)).collect();
        assert_eq!(
            captions,
            vec![
                ("happy pop", Polarity::Positive),
                ("sad ballad", Polarity::Negative),
                ("sad ballad", Polarity::Positive),
                ("happy pop", Polarity::Negative),
            ]
        );
    }

    #[test]
    fn pairing_errors() {
        let segs = segment(&tokenized("a", 16, &["ra"]), 16).unwrap();
        let err = build_pairs(&segs, &reviews(&[("ra", "x")]), 0).unwrap_err();
        assert!(matches!(err, DatasetError::NoNegativePool { .. }));
        let err = build_pairs(&segs, &reviews(&[("rb", "x")]), 0).unwrap_err();
        assert!(matches!(err, DatasetError::MissingReview { .. }));
    }

    #[test]
    fn split_sizes_within_one() {
        assert_eq!(split_sizes(10), [8, 1, 1]);
        for n in 10..500 {
            let s = split_sizes(n);
            assert_eq!(s.iter().sum::<usize>(), n);
            for (size, tenths) in s.iter().zip(SPLIT_TENTHS) {
                assert!((*size as f64 - n as f64 * tenths as f64 / 10.0).abs() < 1.0, "{n}: {s:?}");
            }
        }
    }

    fn examples(n: usize) -> Vec<PairExample> {
        (0..n)
            .map(|i| PairExample {
                segment_id: format!("s{i}"),
                music: "Bar_None\nEOS_None\n".into(),
                caption: format!("caption {i}"),
                polarity: Polarity::Positive,
            })
            .collect()
    }

    #[test]
    fn split_ten_segments() {
        let s = split(&examples(10), 3).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (8, 1, 1));
        assert_eq!(s, split(&examples(10), 3).unwrap());
        assert!(matches!(split(&examples(9), 3), Err(DatasetError::TooFewExamples(9))));
    }

    #[test]
    fn jsonl_round_trip_and_errors() {
        let mut buf = Vec::new();
        write_jsonl_to(&mut buf, &[]).unwrap();
        assert!(buf.is_empty());
        let ex = examples(1);
        write_jsonl_to(&mut buf, &ex).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("{\"segment_id\":\"s0\",\"music\":"));
        assert_eq!(read_jsonl_from(&buf[..]).unwrap(), ex);
        let bad = format!("{text}\n{{\"segment_id\": 3}}\n");
        match read_jsonl_from(bad.as_bytes()) {
            Err(DatasetError::Json { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
