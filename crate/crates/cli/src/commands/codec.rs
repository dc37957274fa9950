use anyhow::Context;
use remiclip::attributes::{bar_scores, AttributeBins};
use remiclip::remi::{decode, detect_chords, repair_with_report, RemiSequence};
use remiclip::{evaluate, write_smf, TokenizedPiece};
use serde_json::{json, Value};

use super::{emit, print_json, read_bytes, read_json, read_midi, stem, write_file, Global};
use crate::args::{AttrsArgs, DetokenizeArgs, MetricsArgs, TokenizeArgs};
use crate::config::announce;
use crate::failure::{Classify, Failure};

pub fn tokenize(global: &Global, args: TokenizeArgs) -> Result<(), Failure> {
    global.no_config()?;
    announce(&args);
    let piece = read_midi(&args.input)?;
    let bins = match &args.bins {
        Some(path) => read_json(path)?,
        None => AttributeBins::fit([&bar_scores(&piece)]).context("fitting attribute bins").data_err()?,
    };
    let t = TokenizedPiece::from_piece(stem(&args.input), &piece, &bins, Vec::new()).data_err()?;
    if args.text {
        emit(&t.seq.to_text())?;
        return Ok(());
    }
    print_json(&json!({
        "piece_id": t.piece_id,
        "bar_count": piece.bar_count,
        "remi": t.seq.to_events_json(),
        "rhythm_classes": t.rhythm_classes,
        "polyphony_classes": t.polyphony_classes,
    }))?;
    Ok(())
}

/// Accepts line-per-token text, a JSON event list, a JSON id list, or
/// `tokenize` output.
fn parse_remi(bytes: &[u8]) -> Result<RemiSequence, Failure> {
    let text = std::str::from_utf8(bytes).context("REMI input is not UTF-8").data_err()?;
    let head = text.trim_start();
    if !(head.starts_with('[') || head.starts_with('{')) {
        return RemiSequence::from_text(text).data_err();
    }
    let value: Value = serde_json::from_str(text).context("parsing REMI JSON").data_err()?;
    let events = match &value {
        Value::Object(map) => map.get("remi").ok_or_else(|| Failure::data("JSON object has no \"remi\" field"))?,
        _ => &value,
    };
    match events.as_array() {
        Some(list) if !list.is_empty() && list.iter().all(Value::is_number) => {
            let ids: Vec<u16> = serde_json::from_value(events.clone()).context("token ids").data_err()?;
            RemiSequence::from_ids(ids).data_err()
        }
        _ => RemiSequence::from_events_json(events).data_err(),
    }
}

pub fn detokenize(global: &Global, args: DetokenizeArgs) -> Result<(), Failure> {
    global.no_config()?;
    announce(&args);
    let mut seq = parse_remi(&read_bytes(&args.input)?)?;
    let mut fixes = 0;
    if args.repair {
        let (fixed, report) = repair_with_report(&seq);
        log::info!("repair: {}", serde_json::to_string(&report).expect("report serializes"));
        fixes = report.total_fixes();
        seq = fixed;
    }
    let decoded = decode(&seq).data_err()?;
    let bytes = write_smf(&decoded.piece).data_err()?;
    write_file(&args.out, bytes)?;
    print_json(&json!({
        "out": args.out,
        "bar_count": decoded.piece.bar_count,
        "notes": decoded.piece.notes.len(),
        "repairs": fixes,
    }))?;
    Ok(())
}

pub fn attrs(global: &Global, args: AttrsArgs) -> Result<(), Failure> {
    global.no_config()?;
    announce(&args);
    let mut scores = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        scores.push(bar_scores(&read_midi(path)?));
    }
    let bins = AttributeBins::fit(&scores).context("fitting attribute bins").data_err()?;
    if let Some(path) = &args.bins_out {
        write_file(path, serde_json::to_string_pretty(&bins).expect("bins serialize"))?;
    }
    let files: Vec<Value> = args
        .inputs
        .iter()
        .zip(&scores)
        .map(|(path, s)| {
            let classes = bins.classify(s);
            json!({
                "file": path,
                "rhythmic_intensity": s.rhythmic_intensity,
                "polyphony": s.polyphony,
                "rhythm_classes": classes.rhythm_classes,
                "polyphony_classes": classes.polyphony_classes,
            })
        })
        .collect();
    print_json(&json!({ "bins": bins, "files": files }))?;
    Ok(())
}

pub fn metrics(global: &Global, args: MetricsArgs) -> Result<(), Failure> {
    global.no_config()?;
    announce(&args);
    let piece = read_midi(&args.input)?;
    let report = evaluate(&piece, &detect_chords(&piece)).data_err()?;
    if args.json {
        print_json(&report)?;
    } else {
        emit(&report.to_table())?;
    }
    Ok(())
}
