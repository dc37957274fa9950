use ndarray::Array2;
use proptest::prelude::*;
use remiclip::align::info_nce;
use remiclip::attributes::OctileEdges;
use remiclip::dataset::{read_jsonl_from, split, write_jsonl_to, PairExample, Polarity};
use remiclip::metrics::evaluate;
use remiclip::remi::{decode, detect_chords, encode, repair, ChordLabel, Token};
use remiclip::rng::seeded;
use remiclip::synthetic::{random_grid_piece, random_piece, random_token_stream};

fn matrix(rows: usize, cols: usize, values: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |(i, j)| values[(i * cols + j) % values.len()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn grid_pieces_round_trip(seed in any::<u64>()) {
        let piece = random_grid_piece(&mut seeded(seed), 6);
        let chords = detect_chords(&piece);
        let seq = encode(&piece, &chords).unwrap();
        let decoded = decode(&seq).unwrap();
        prop_assert_eq!(decoded.piece, piece);
        prop_assert_eq!(decoded.chords, chords);
    }

    #[test]
    fn repair_is_total_and_idempotent(seed in any::<u64>()) {
        let raw = random_token_stream(&mut seeded(seed), 300);
        let fixed = repair(&raw);
        prop_assert!(decode(&fixed).is_ok());
        prop_assert_eq!(fixed.tokens().last(), Some(Token::Eos));
        prop_assert_eq!(repair(&fixed), fixed);
    }

    #[test]
    fn well_formed_streams_survive_repair(seed in any::<u64>()) {
        let piece = random_piece(&mut seeded(seed), 4);
        let seq = encode(&piece, &detect_chords(&piece)).unwrap();
        prop_assert_eq!(repair(&seq), seq);
    }

    #[test]
    fn octile_classes_are_monotone(scores in prop::collection::vec(0.0f64..20.0, 1..200), a in 0.0f64..20.0, b in 0.0f64..20.0) {
        let edges = OctileEdges::fit(&scores).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(edges.classify(lo) <= edges.classify(hi));
        prop_assert!(edges.classify(hi) < 8);
        prop_assert!(edges.0.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn info_nce_ignores_batch_order(
        values in prop::collection::vec(-1.0f64..1.0, 8..64),
        n in 2usize..8,
        shift in 1usize..8,
        tau in 0.05f64..2.0,
    ) {
        let music = matrix(n, 4, &values);
        let text = matrix(n, 4, &values[values.len() / 2..]);
        let order: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let permute = |m: &Array2<f64>| m.select(ndarray::Axis(0), &order);
        let a = info_nce(&music, &text, tau).unwrap();
        let b = info_nce(&permute(&music), &permute(&text), tau).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn jsonl_round_trips(captions in prop::collection::vec(any::<String>(), 1..20), music in "[A-Za-z_0-9\n]{0,40}") {
        let examples: Vec<PairExample> = captions
            .into_iter()
            .enumerate()
            .map(|(i, caption)| PairExample {
                segment_id: format!("p{}#{:04}", i / 3, i % 3),
                music: music.clone(),
                caption,
                polarity: if i % 2 == 0 { Polarity::Positive } else { Polarity::Negative },
            })
            .collect();
        let mut buf = Vec::new();
        write_jsonl_to(&mut buf, &examples).unwrap();
        prop_assert_eq!(read_jsonl_from(buf.as_slice()).unwrap(), examples);
    }

    #[test]
    fn split_partitions_by_segment(n in 10usize..120, seed in any::<u64>()) {
        let examples: Vec<PairExample> = (0..n)
            .map(|i| PairExample {
                segment_id: format!("s{}", i / 2),
                music: String::new(),
                caption: i.to_string(),
                polarity: Polarity::Positive,
            })
            .collect();
        let set = split(&examples, seed).unwrap();
        let parts = [&set.train, &set.validation, &set.test];
        prop_assert_eq!(parts.iter().map(|p| p.len()).sum::<usize>(), n);
        for (i, a) in parts.iter().enumerate() {
            for b in &parts[i + 1..] {
                prop_assert!(a.iter().all(|x| b.iter().all(|y| x.segment_id != y.segment_id)));
            }
        }
        prop_assert_eq!(split(&examples, seed).unwrap(), set);
    }

    #[test]
    fn metrics_follow_transposition(seed in any::<u64>(), k in -12i32..=12) {
        let piece = random_piece(&mut seeded(seed), 8);
        let Some(moved) = piece.transposed(k) else { return Ok(()) };
        let chords = detect_chords(&piece);
        let moved_chords: Vec<ChordLabel> = chords
            .iter()
            .map(|&c| match c {
                ChordLabel::NoChord => c,
                ChordLabel::Chord { root, quality } => ChordLabel::new((i32::from(root) + k).rem_euclid(12) as u8, quality),
            })
            .collect();
        let a = evaluate(&piece, &chords).unwrap();
        let b = evaluate(&moved, &moved_chords).unwrap();
        prop_assert_eq!(b.pitch_min.map(|p| i32::from(p) - k), a.pitch_min.map(i32::from));
        prop_assert_eq!(b.pitch_space, a.pitch_space);
        prop_assert_eq!(b.unique_pitches_per_bar, a.unique_pitches_per_bar);
        prop_assert_eq!(b.chord_repetition, a.chord_repetition);
        prop_assert_eq!(b.qualified_notes_rate, a.qualified_notes_rate);
        prop_assert_eq!(b.empty_bar_rate, a.empty_bar_rate);
        prop_assert_eq!(b.polyphonicity, a.polyphonicity);
    }
}
