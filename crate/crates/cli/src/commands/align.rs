use std::sync::Arc;

use anyhow::Context;
use remiclip::align::{prepare, tokenize_text, train_items, AlignBatch, AlignConfig, AlignModel, Split, TrainItems};
use remiclip::dataset::read_jsonl;
use remiclip::generate::{DecoderConfig, DecoderModel, GuidedBatch};
use remiclip::grad::{grad_check as check, GradCheckReport};
use remiclip::synthetic::described_pairs;
use remiclip::RemiSequence;
use serde_json::json;

use super::{print_json, write_file, Global};
use crate::args::{AlignFlags, GradCheckArgs, GradTarget, LossModeArg, SchedulerArg, TrainAlignArgs};
use crate::config::{announce, resolve, Overrides};
use crate::failure::{Classify, Failure};

fn align_overrides(flags: &AlignFlags, seed: Option<u64>) -> Overrides {
    let mut o = Overrides::default();
    o.set("embed_dim", flags.embed_dim)
        .set("batch_size", flags.batch_size)
        .set("epochs", flags.epochs)
        .set("lr_max", flags.lr_max)
        .set("lr_min", flags.lr_min)
        .set(
            "scheduler",
            flags.scheduler.map(|s| match s {
                SchedulerArg::Constant => "constant",
                SchedulerArg::Cosine => "cosine",
            }),
        )
        .set("temperature_init", flags.temperature_init)
        .set("text_hash_buckets", flags.text_hash_buckets)
        .set("init_scale", flags.init_scale)
        .set(
            "loss_mode",
            flags.loss_mode.map(|m| match m {
                LossModeArg::InBatch => "in_batch",
                LossModeArg::Pairwise => "pairwise",
            }),
        )
        .set("seed", seed);
    o
}

pub fn train(global: &Global, args: TrainAlignArgs) -> Result<(), Failure> {
    let config: AlignConfig = resolve(Overrides::default(), global.config, align_overrides(&args.align, global.seed))?;
    config.validate().usage_err()?;
    announce(&json!({ "data": args.data, "out": args.out, "loss_csv": args.loss_csv, "align": config }));
    let train_set = read_jsonl(args.data.join("train.jsonl")).data_err()?;
    let validation_path = args.data.join("validation.jsonl");
    let validation_set = if validation_path.exists() { read_jsonl(validation_path).data_err()? } else { Vec::new() };
    let items = prepare(&train_set, &config).data_err()?;
    let validation = prepare(&validation_set, &config).data_err()?;
    log::info!("{} training and {} validation units", items.len(), validation.len());
    let (model, history) = train_items(&items, &validation, &config).data_err()?;
    model.save(&args.out).with_context(|| format!("saving {}", args.out.display())).data_err()?;
    if let Some(path) = &args.loss_csv {
        write_file(path, history.to_csv())?;
    }
    print_json(&json!({
        "out": args.out,
        "epochs": config.epochs,
        "final_train_loss": history.losses(Split::Train).last(),
        "final_validation_loss": history.losses(Split::Validation).last(),
        "temperature": model.temperature(),
    }))?;
    Ok(())
}

fn first_batch(items: TrainItems, size: usize) -> Result<AlignBatch, Failure> {
    let batch = match items {
        TrainItems::Pairs(p) if p.len() >= 2 => AlignBatch::InBatch(p.into_iter().take(size.max(2)).collect()),
        TrainItems::Groups(g) if !g.is_empty() => AlignBatch::Pairwise(g.into_iter().take(size.max(1)).collect()),
        _ => return Err(Failure::data("not enough examples for a batch")),
    };
    Ok(batch)
}

fn summary(report: &GradCheckReport) -> serde_json::Value {
    json!({ "max_rel_error": report.max_rel_error(), "tensors": report.tensors })
}

pub fn grad_check(global: &Global, args: GradCheckArgs) -> Result<(), Failure> {
    if !(args.step > 0.0 && args.step.is_finite()) || args.samples == 0 {
        return Err(Failure::usage("--step must be positive and --samples nonzero"));
    }
    // Unit-scale embeddings keep gradients above finite-difference roundoff.
    let mut base = Overrides::default();
    base.set("init_scale", Some(1.0));
    let config: AlignConfig = resolve(base, global.config, align_overrides(&args.align_flags, global.seed))?;
    config.validate().usage_err()?;
    let seed = config.seed;
    announce(&json!({
        "model": args.model,
        "data": args.data,
        "align_checkpoint": args.align,
        "step": args.step,
        "samples": args.samples,
        "tolerance": args.tolerance,
        "prompt": args.prompt,
        "align": config,
    }));
    let mut align = match &args.align {
        Some(path) => AlignModel::load(path).with_context(|| format!("loading {}", path.display())).data_err()?,
        None => AlignModel::new(config.clone()).usage_err()?,
    };
    let examples = match &args.data {
        Some(path) => read_jsonl(path).data_err()?,
        None => described_pairs(8, 2, seed),
    };
    let batch = first_batch(prepare(&examples, &align.config).data_err()?, align.config.batch_size)?;

    let mut out = serde_json::Map::new();
    let mut worst = 0.0f64;
    if args.model != GradTarget::Decoder {
        let report = check(&mut align, &batch, args.step, args.samples, seed).data_err()?;
        worst = worst.max(report.max_rel_error());
        out.insert("align".into(), summary(&report));
    }
    if args.model != GradTarget::Align {
        let music = examples.first().ok_or_else(|| Failure::data("no examples"))?;
        let seq = RemiSequence::from_text(&music.music).data_err()?;
        let decoder_config = DecoderConfig { init_scale: 1.0, seed, ..DecoderConfig::default() };
        let context: Vec<usize> = seq.ids().iter().take(decoder_config.max_len).map(|&i| usize::from(i)).collect();
        let prompt = tokenize_text(&args.prompt, align.config.text_hash_buckets);
        let mut decoder = DecoderModel::new(decoder_config).usage_err()?;
        let guided = GuidedBatch { align: Arc::new(align), context, prompt };
        let report = check(&mut decoder, &guided, args.step, args.samples, seed.wrapping_add(1)).data_err()?;
        worst = worst.max(report.max_rel_error());
        out.insert("decoder".into(), summary(&report));
    }
    let passed = worst < args.tolerance;
    out.insert("tolerance".into(), json!(args.tolerance));
    out.insert("passed".into(), json!(passed));
    print_json(&out)?;
    if passed {
        Ok(())
    } else {
        Err(Failure::data(format!("gradient check failed: max relative error {worst:e} >= {:e}", args.tolerance)))
    }
}
