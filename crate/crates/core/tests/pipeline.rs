use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use remiclip::align::{train, AlignConfig, AlignModel};
use remiclip::attributes::{bar_scores, AttributeBins};
use remiclip::dataset::{build_pairs, read_jsonl, segment, split, write_jsonl, TokenizedPiece};
use remiclip::generate::{clip_guided_tune, DecoderConfig, DecoderModel, GenerationConfig};
use remiclip::midi::{parse_smf, quantize, write_smf};
use remiclip::remi::decode;
use remiclip::rng::seeded;
use remiclip::synthetic::random_grid_piece;

fn small_align() -> AlignConfig {
    AlignConfig { embed_dim: 8, batch_size: 4, epochs: 2, text_hash_buckets: 128, ..AlignConfig::default() }
}

#[test]
fn midi_files_to_trained_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = seeded(3);
    let mut pieces = Vec::new();
    for _ in 0..4 {
        let mut p = random_grid_piece(&mut rng, 6);
        p.bar_count = rng.random_range(16..=24);
        let bytes = write_smf(&p).unwrap();
        pieces.push(quantize(&parse_smf(&bytes).unwrap()));
    }
    let scores: Vec<_> = pieces.iter().map(bar_scores).collect();
    let bins = AttributeBins::fit(&scores).unwrap();
    let mut reviews = BTreeMap::new();
    let mut segments = Vec::new();
    for (i, p) in pieces.iter().enumerate() {
        let id = format!("r{i}");
        reviews.insert(id.clone(), format!("caption number {i}"));
        let t = TokenizedPiece::from_piece(format!("piece{i}"), p, &bins, vec![id]).unwrap();
        assert_eq!(t.rhythm_classes.len(), p.bar_count as usize);
        segments.extend(segment(&t, 4).unwrap());
    }
    let pairs = build_pairs(&segments, &reviews, 5).unwrap();
    let path = dir.path().join("pairs.jsonl");
    write_jsonl(&path, &pairs).unwrap();
    assert_eq!(read_jsonl(&path).unwrap(), pairs);

    let set = split(&pairs, 5).unwrap();
    let (model, history) = train(&set, &small_align()).unwrap();
    assert_eq!(history.0.len(), 4);
    let ckpt = dir.path().join("align.bin");
    model.save(&ckpt).unwrap();
    let loaded = AlignModel::load(&ckpt).unwrap();
    assert_eq!(loaded, model);
}

#[test]
fn decoder_checkpoint_and_guided_generation() {
    let align = Arc::new(AlignModel::new(small_align()).unwrap());
    let decoder = DecoderModel::new(DecoderConfig { embed_dim: 8, max_len: 32, ..DecoderConfig::default() }).unwrap();
    let mut bytes = Vec::new();
    decoder.write_to(&mut bytes).unwrap();
    let restored = DecoderModel::read_from(bytes.as_slice()).unwrap();
    assert_eq!(restored, decoder);

    let config = GenerationConfig {
        prompt: "a gentle waltz".into(),
        max_tokens: 32,
        tune_epochs: 3,
        tune_context: 8,
        seed: 4,
        ..GenerationConfig::default()
    };
    let a = clip_guided_tune(restored, Arc::clone(&align), &config).unwrap();
    let b = clip_guided_tune(decoder, align, &config).unwrap();
    assert_eq!(a.raw, b.raw);
    assert_eq!(a.history, b.history);
    let piece = decode(&a.repaired).unwrap().piece;
    assert!(write_smf(&piece).is_ok());
}

#[test]
fn align_checkpoint_rejects_decoder_file() {
    let decoder = DecoderModel::new(DecoderConfig { embed_dim: 4, max_len: 4, ..DecoderConfig::default() }).unwrap();
    let mut bytes = Vec::new();
    decoder.write_to(&mut bytes).unwrap();
    assert!(AlignModel::read_from(bytes.as_slice()).is_err());
}
