use serde::{Deserialize, Serialize};

use super::AlignError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheduler {
    Constant,
    Cosine,
}

/// Where a music segment's negatives come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Every other caption in the batch; symmetric InfoNCE.
    InBatch,
    /// The explicit negative captions stored with each segment.
    Pairwise,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignConfig {
    pub embed_dim: usize,
    pub heads: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub scheduler: Scheduler,
    pub epochs: usize,
    pub seed: u64,
    pub temperature_init: f64,
    pub text_hash_buckets: usize,
    /// Standard deviation of the initial embedding entries. Outputs are
    /// normalized, so smaller values mean larger effective steps.
    pub init_scale: f64,
    pub loss_mode: LossMode,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            embed_dim: 64,
            heads: 1,
            batch_size: 8,
            lr_max: 1e-4,
            lr_min: 5e-6,
            scheduler: Scheduler::Cosine,
            epochs: 200,
            seed: 0,
            temperature_init: 0.07,
            text_hash_buckets: 32768,
            init_scale: 0.005,
            loss_mode: LossMode::InBatch,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<(), AlignError> {
        let fail = |msg: &str| Err(AlignError::Config(msg.to_string()));
        if self.embed_dim == 0 {
            return fail("embed_dim must be positive");
        }
        if self.heads != 1 {
            return fail("only single-head attention is supported");
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_max && self.lr_max.is_finite()) {
            return fail("need 0 < lr_min <= lr_max");
        }
        if self.loss_mode == LossMode::InBatch && self.batch_size < 2 {
            return fail("in-batch negatives need batch_size >= 2");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if !(self.temperature_init > 0.0 && self.temperature_init.is_finite()) {
            return fail("temperature_init must be positive");
        }
        if self.text_hash_buckets == 0 {
            return fail("text_hash_buckets must be positive");
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return fail("init_scale must be positive");
        }
        Ok(())
    }
}
