//! Toy text-music alignment: embedding-table encoders, a bidirectional
//! cross-attention block, contrastive losses and a seeded SGD trainer.

mod config;
mod loss;
mod model;
mod text;
mod train;

use thiserror::Error;

pub use config::{AlignConfig, LossMode, Scheduler};
pub use loss::{info_nce, pairwise_loss, symmetric_cross_entropy};
pub use model::{
    AlignBatch, AlignModel, AlignPair, ContrastGroup, CrossBlock, MAX_TEMPERATURE, MIN_TEMPERATURE, MUSIC_ROWS,
    PARAM_NAMES,
};
pub use text::tokenize_text;
pub use train::{learning_rate, prepare, train, train_items, EpochLoss, LossHistory, Split, TrainItems};

use crate::checkpoint::CheckpointError;
use crate::remi::VocabError;

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("empty token sequence")]
    EmptySequence,
    #[error("token id {0} out of range")]
    TokenOutOfRange(usize),
    #[error("batch of {0} is too small")]
    BatchTooSmall(usize),
    #[error("no negative captions provided")]
    NoNegatives,
    #[error("non-finite similarity")]
    NonFiniteSimilarity,
    #[error("non-finite loss {loss} at step {step} (lr {lr:e}, grad norm {grad_norm:e})")]
    NonFinite { step: usize, lr: f64, grad_norm: f64, loss: f64 },
    #[error("training split yields no batches")]
    EmptyTrainingSet,
    #[error("music tokens: {0}")]
    Music(#[from] VocabError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}
