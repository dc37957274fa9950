//! Sampling loops and prompt-guided decoder tuning.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::decoder::{DecoderModel, GuidedBatch, BOS};
use super::sampling::nucleus_sample;
use super::GenerateError;
use crate::align::{tokenize_text, AlignModel};
use crate::grad::Differentiable;
use crate::remi::{repair_with_report, RemiSequence, RepairReport, Token};
use crate::rng::seeded;

/// Stop once `patience` epochs pass without the loss improving on its best
/// by more than `min_delta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        EarlyStop { patience: 10, min_delta: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub nucleus_p: f64,
    pub max_tokens: usize,
    pub tune_epochs: usize,
    pub tune_lr: f64,
    /// Tokens sampled per epoch as the tuning context.
    pub tune_context: usize,
    pub seed: u64,
    pub prompt: String,
    /// Off unless set; the full epoch budget runs by default.
    pub early_stop: Option<EarlyStop>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            nucleus_p: 0.9,
            max_tokens: 512,
            tune_epochs: 100,
            tune_lr: 1.0,
            tune_context: 64,
            seed: 0,
            prompt: String::new(),
            early_stop: None,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self, decoder: &DecoderModel) -> Result<(), GenerateError> {
        let fail = |m: String| Err(GenerateError::Config(m));
        if !(self.nucleus_p > 0.0 && self.nucleus_p <= 1.0) {
            return fail(format!("nucleus_p must be in (0, 1], got {}", self.nucleus_p));
        }
        let max = decoder.config.max_len;
        if self.max_tokens == 0 || self.max_tokens > max {
            return fail(format!("max_tokens must be in 1..={max}"));
        }
        if self.tune_context > max {
            return fail(format!("tune_context must be at most {max}"));
        }
        if !(self.tune_lr > 0.0 && self.tune_lr.is_finite()) {
            return fail("tune_lr must be positive".into());
        }
        Ok(())
    }
}

/// Samples up to `max_tokens` ids, stopping after an `EOS`.
fn sample_tokens(
    model: &DecoderModel,
    p: f64,
    max_tokens: usize,
    rng: &mut impl Rng,
) -> Result<Vec<usize>, GenerateError> {
    let eos = Token::Eos.id() as usize;
    let mut cache = model.cache();
    let mut out = Vec::with_capacity(max_tokens);
    let mut input = BOS;
    while out.len() < max_tokens {
        let logits = cache.step(input)?;
        input = nucleus_sample(logits.view(), p, rng);
        out.push(input);
        if input == eos {
            break;
        }
    }
    Ok(out)
}

fn to_sequence(ids: &[usize]) -> RemiSequence {
    RemiSequence::from_ids(ids.iter().map(|&i| i as u16).collect()).expect("sampled ids are in the vocabulary")
}

/// Nucleus-samples a raw, possibly ill-formed stream under `config.seed`.
pub fn generate_raw(model: &DecoderModel, config: &GenerationConfig) -> Result<RemiSequence, GenerateError> {
    config.validate(model)?;
    let ids = sample_tokens(model, config.nucleus_p, config.max_tokens, &mut seeded(config.seed))?;
    Ok(to_sequence(&ids))
}

#[derive(Clone, Debug)]
pub struct TuneOutcome {
    pub decoder: DecoderModel,
    /// Loss of each epoch, measured before its update.
    pub history: Vec<f64>,
    pub raw: RemiSequence,
    pub repaired: RemiSequence,
    pub report: RepairReport,
}

/// Tunes the decoder so its expected output aligns with `prompt` under the
/// frozen alignment model. Each epoch samples a hard context, scores the
/// decoder's softmax outputs along it as soft music tokens and takes one
/// gradient step on the decoder alone. The final piece is sampled from the
/// tuned decoder and repaired.
pub fn clip_guided_tune(
    mut decoder: DecoderModel,
    align: Arc<AlignModel>,
    config: &GenerationConfig,
) -> Result<TuneOutcome, GenerateError> {
    config.validate(&decoder)?;
    let prompt = tokenize_text(&config.prompt, align.config.text_hash_buckets);
    if config.prompt.trim().is_empty() {
        return Err(GenerateError::EmptyPrompt);
    }
    let mut rng = seeded(config.seed);
    let mut history = Vec::with_capacity(config.tune_epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 0..config.tune_epochs {
        let context = sample_tokens(&decoder, config.nucleus_p, config.tune_context, &mut rng)?;
        let batch = GuidedBatch { align: Arc::clone(&align), context, prompt: prompt.clone() };
        let (loss, grads) = decoder.loss_and_grad(&batch)?;
        let grad_norm = grads.norm();
        if !loss.is_finite() || !grad_norm.is_finite() {
            return Err(GenerateError::NonFinite { epoch, loss, grad_norm });
        }
        decoder.sgd_step(&grads, config.tune_lr);
        history.push(loss);
        log::debug!("tune epoch {epoch}: loss {loss:.6}");
        if let Some(stop) = config.early_stop {
            if loss < best - stop.min_delta {
                best = loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= stop.patience {
                    break;
                }
            }
        }
    }
    let raw = to_sequence(&sample_tokens(&decoder, config.nucleus_p, config.max_tokens, &mut rng)?);
    let (repaired, report) = repair_with_report(&raw);
    Ok(TuneOutcome { decoder, history, raw, repaired, report })
}
