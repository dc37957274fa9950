use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Context;
use remiclip::attributes::{bar_scores, AttributeBins};
use remiclip::dataset::{build_pairs, read_jsonl, segment, write_jsonl, Polarity};
use remiclip::TokenizedPiece;
use serde::Deserialize;
use serde_json::json;

use super::{print_json, read_json, read_midi, stem, Global};
use crate::args::{DatasetBuildArgs, DatasetSplitArgs};
use crate::config::announce;
use crate::failure::{Classify, Failure};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReviewFile {
    reviews: BTreeMap<String, String>,
    links: BTreeMap<String, Vec<String>>,
}

fn midi_files(dir: &std::path::Path) -> Result<Vec<PathBuf>, Failure> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display())).data_err()?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.data_err()?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("mid" | "midi")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn build(global: &Global, mut args: DatasetBuildArgs) -> Result<(), Failure> {
    global.no_config()?;
    args.seed = global.seed.unwrap_or(0);
    if args.segment_bars == 0 {
        return Err(Failure::usage("--segment-bars must be positive"));
    }
    announce(&args);
    let review_file: ReviewFile = read_json(&args.reviews)?;
    let files = midi_files(&args.midi_dir)?;
    let mut pieces = Vec::new();
    for path in &files {
        let id = stem(path);
        match review_file.links.get(&id) {
            Some(ids) if !ids.is_empty() => pieces.push((id, read_midi(path)?, ids.clone())),
            _ => log::warn!("{}: no linked reviews, skipped", path.display()),
        }
    }
    let scores: Vec<_> = pieces.iter().map(|(_, p, _)| bar_scores(p)).collect();
    let bins = AttributeBins::fit(&scores).context("no linked pieces with bars").data_err()?;
    let mut segments = Vec::new();
    for (id, piece, review_ids) in &pieces {
        let tokenized = TokenizedPiece::from_piece(id.clone(), piece, &bins, review_ids.clone()).data_err()?;
        let found = segment(&tokenized, args.segment_bars).data_err()?;
        log::info!("{id}: {} bars, {} segments", piece.bar_count, found.len());
        segments.extend(found);
    }
    let pairs = build_pairs(&segments, &review_file.reviews, args.seed).data_err()?;
    write_jsonl(&args.out, &pairs).data_err()?;
    print_json(&json!({
        "out": args.out,
        "pieces": pieces.len(),
        "segments": segments.len(),
        "positives": pairs.iter().filter(|p| p.polarity == Polarity::Positive).count(),
        "negatives": pairs.iter().filter(|p| p.polarity == Polarity::Negative).count(),
    }))?;
    Ok(())
}

pub fn split(global: &Global, mut args: DatasetSplitArgs) -> Result<(), Failure> {
    global.no_config()?;
    args.seed = global.seed.unwrap_or(0);
    announce(&args);
    let examples = read_jsonl(&args.input).data_err()?;
    let set = remiclip::dataset::split(&examples, args.seed).data_err()?;
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))
        .data_err()?;
    let mut counts = BTreeMap::new();
    for (name, part) in [("train", &set.train), ("validation", &set.validation), ("test", &set.test)] {
        write_jsonl(args.out_dir.join(format!("{name}.jsonl")), part).data_err()?;
        counts.insert(name, part.len());
    }
    print_json(&json!({ "out_dir": args.out_dir, "examples": counts }))?;
    Ok(())
}
