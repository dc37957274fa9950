use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::sync::Arc;

use anyhow::Context;
use remiclip::align::{AlignConfig, AlignModel};
use remiclip::generate::{clip_guided_tune, DecoderConfig, DecoderModel, EarlyStop, GenerationConfig};
use remiclip::{decode, write_smf};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{print_json, write_file, Global};
use crate::args::GenerateArgs;
use crate::config::{announce, resolve, Overrides};
use crate::failure::{Classify, Failure};

/// Shape of a `generate --config` file.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenerateSettings {
    generation: GenerationConfig,
    decoder: DecoderConfig,
}

pub fn generate(global: &Global, args: GenerateArgs) -> Result<(), Failure> {
    let mut generation = Overrides::default();
    generation
        .set("prompt", args.prompt.as_ref())
        .set("nucleus_p", args.nucleus_p)
        .set("max_tokens", args.max_tokens)
        .set("tune_epochs", args.tune_epochs)
        .set("tune_lr", args.tune_lr)
        .set("tune_context", args.tune_context)
        .set("seed", global.seed);
    let mut decoder = Overrides::default();
    decoder.set("embed_dim", args.embed_dim).set("seed", global.seed);
    let mut top = Overrides::default();
    top.nest("generation", generation).nest("decoder", decoder);
    let mut settings: GenerateSettings = resolve(Overrides::default(), global.config, top)?;
    if let Some(patience) = args.patience {
        let min_delta = settings.generation.early_stop.map_or(EarlyStop::default().min_delta, |e| e.min_delta);
        settings.generation.early_stop = Some(EarlyStop { patience, min_delta });
    }
    if settings.generation.prompt.trim().is_empty() {
        return Err(Failure::usage("a non-empty --prompt is required"));
    }
    announce(&json!({
        "align": args.align,
        "decoder_checkpoint": args.decoder,
        "out_dir": args.out_dir,
        "settings": settings,
    }));

    let align = match &args.align {
        Some(path) => AlignModel::load(path).with_context(|| format!("loading {}", path.display())).data_err()?,
        None => {
            log::warn!("no --align checkpoint; tuning against an untrained alignment model");
            AlignModel::new(AlignConfig { seed: settings.generation.seed, ..AlignConfig::default() }).usage_err()?
        }
    };
    let model = match &args.decoder {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display())).data_err()?;
            DecoderModel::read_from(BufReader::new(file))
                .with_context(|| format!("loading {}", path.display()))
                .data_err()?
        }
        None => DecoderModel::new(settings.decoder.clone()).usage_err()?,
    };
    settings.generation.validate(&model).usage_err()?;

    let outcome = clip_guided_tune(model, Arc::new(align), &settings.generation).data_err()?;
    let piece = decode(&outcome.repaired).context("repaired stream failed to decode").data_err()?.piece;
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))
        .data_err()?;
    let raw_path = args.out_dir.join("raw.txt");
    let repaired_path = args.out_dir.join("repaired.txt");
    let midi_path = args.out_dir.join("generated.mid");
    write_file(&raw_path, outcome.raw.to_text())?;
    write_file(&repaired_path, outcome.repaired.to_text())?;
    write_file(&midi_path, write_smf(&piece).data_err()?)?;
    if let Some(path) = &args.loss_csv {
        let mut csv = String::from("epoch,loss\n");
        for (i, loss) in outcome.history.iter().enumerate() {
            csv.push_str(&format!("{},{loss}\n", i + 1));
        }
        write_file(path, csv)?;
    }
    if let Some(path) = &args.save_decoder {
        let file = File::create(path).with_context(|| format!("creating {}", path.display())).data_err()?;
        outcome.decoder.write_to(BufWriter::new(file)).data_err()?;
    }
    print_json(&json!({
        "raw": raw_path,
        "repaired": repaired_path,
        "midi": midi_path,
        "epochs": outcome.history.len(),
        "first_loss": outcome.history.first(),
        "last_loss": outcome.history.last(),
        "raw_tokens": outcome.raw.len(),
        "repairs": outcome.report.total_fixes(),
        "notes": piece.notes.len(),
    }))?;
    Ok(())
}
