//! Autoregressive REMI generation and decoder tuning against a frozen
//! alignment model.

mod decoder;
mod sampling;
mod tune;

use thiserror::Error;

pub use decoder::{DecoderConfig, DecoderModel, GuidedBatch, KvCache, BOS, DECODER_PARAM_NAMES};
pub use sampling::{nucleus, nucleus_sample, MASS_TOLERANCE};
pub use tune::{clip_guided_tune, generate_raw, EarlyStop, GenerationConfig, TuneOutcome};

use crate::align::AlignError;
use crate::checkpoint::CheckpointError;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("prefix of {len} tokens exceeds the maximum of {max}")]
    PrefixTooLong { len: usize, max: usize },
    #[error("token id {0} out of range")]
    TokenOutOfRange(usize),
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("non-finite tuning loss {loss} at epoch {epoch} (grad norm {grad_norm:e})")]
    NonFinite { epoch: usize, loss: f64, grad_norm: f64 },
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}
