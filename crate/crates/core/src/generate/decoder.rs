//! One-block causal transformer over REMI ids.
//!
//! Input row 0 is a begin-of-sequence embedding; row `k` of the output
//! scores the token at position `k` of the generated stream.

use std::sync::Arc;

use ndarray::{concatenate, s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::GenerateError;
use crate::align::AlignModel;
use crate::checkpoint::{read_checkpoint, write_checkpoint, CheckpointError};
use crate::grad::{Differentiable, GradTensor, Gradients};
use crate::nn::{attention, attention_backward, gather_rows, random_matrix, softmax, softmax_rows};
use crate::remi::VOCAB_SIZE;
use crate::rng::seeded;

pub const BOS: usize = VOCAB_SIZE;
pub const DECODER_PARAM_NAMES: [&str; 7] = ["tok_emb", "pos_emb", "wq", "wk", "wv", "wo", "out"];
pub const CHECKPOINT_KIND: &str = "decoder";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    pub embed_dim: usize,
    /// Longest prefix the position table covers.
    pub max_len: usize,
    pub seed: u64,
    /// Standard deviation of the initial token and position embeddings.
    pub init_scale: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig { embed_dim: 64, max_len: 512, seed: 0, init_scale: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderModel {
    pub config: DecoderConfig,
    /// Vocabulary rows plus the begin-of-sequence row.
    pub tok_emb: Array2<f64>,
    /// `max_len + 1` rows.
    pub pos_emb: Array2<f64>,
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    /// d × vocabulary, no bias.
    pub out: Array2<f64>,
}

struct Forward {
    ids: Vec<usize>,
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    a: Array2<f64>,
    o: Array2<f64>,
    h: Array2<f64>,
    logits: Array2<f64>,
}

/// The guided-tuning objective for one sampled context: one minus the
/// alignment model's cosine between the decoder's expected music states
/// and the prompt.
#[derive(Clone, Debug)]
pub struct GuidedBatch {
    pub align: Arc<AlignModel>,
    /// Hard tokens fed to the decoder after the begin token.
    pub context: Vec<usize>,
    pub prompt: Vec<usize>,
}

impl DecoderModel {
    pub fn new(config: DecoderConfig) -> Result<Self, GenerateError> {
        if config.embed_dim == 0 || config.max_len == 0 || config.init_scale.is_nan() || config.init_scale <= 0.0 {
            return Err(GenerateError::Config("decoder needs positive embed_dim, max_len and init_scale".into()));
        }
        let d = config.embed_dim;
        let w = (d as f64).sqrt().recip();
        let mut rng = seeded(config.seed);
        Ok(DecoderModel {
            tok_emb: random_matrix(&mut rng, VOCAB_SIZE + 1, d, config.init_scale),
            pos_emb: random_matrix(&mut rng, config.max_len + 1, d, config.init_scale),
            wq: random_matrix(&mut rng, d, d, w),
            wk: random_matrix(&mut rng, d, d, w),
            wv: random_matrix(&mut rng, d, d, w),
            wo: random_matrix(&mut rng, d, d, w),
            out: random_matrix(&mut rng, d, VOCAB_SIZE, w),
            config,
        })
    }

    fn check_prefix(&self, prefix: &[usize]) -> Result<(), GenerateError> {
        if prefix.len() > self.config.max_len {
            return Err(GenerateError::PrefixTooLong { len: prefix.len(), max: self.config.max_len });
        }
        match prefix.iter().find(|&&t| t >= VOCAB_SIZE) {
            Some(&t) => Err(GenerateError::TokenOutOfRange(t)),
            None => Ok(()),
        }
    }

    fn forward(&self, prefix: &[usize]) -> Forward {
        let mut ids = Vec::with_capacity(prefix.len() + 1);
        ids.push(BOS);
        ids.extend_from_slice(prefix);
        let x = gather_rows(&self.tok_emb, &ids) + self.pos_emb.slice(s![..ids.len(), ..]);
        let (q, k, v) = (x.dot(&self.wq), x.dot(&self.wk), x.dot(&self.wv));
        let (o, a) = attention(q.view(), k.view(), v.view(), true);
        let h = &x + &o.dot(&self.wo);
        let logits = h.dot(&self.out);
        Forward { ids, x, q, k, v, a, o, h, logits }
    }

    /// Scores for the token following `prefix`.
    pub fn decoder_logits(&self, prefix: &[usize]) -> Result<Array1<f64>, GenerateError> {
        self.check_prefix(prefix)?;
        let f = self.forward(prefix);
        Ok(f.logits.row(prefix.len()).to_owned())
    }

    /// Scores after every prefix of `tokens`, one row per prefix length.
    pub fn all_logits(&self, tokens: &[usize]) -> Result<Array2<f64>, GenerateError> {
        self.check_prefix(tokens)?;
        Ok(self.forward(tokens).logits)
    }

    /// Incremental decoding state starting from the begin token.
    pub fn cache(&self) -> KvCache<'_> {
        let d = self.config.embed_dim;
        KvCache { model: self, keys: Array2::zeros((0, d)), values: Array2::zeros((0, d)), len: 0 }
    }

    fn guided(&self, batch: &GuidedBatch, want_grad: bool) -> Result<(f64, Option<Gradients>), GenerateError> {
        self.check_prefix(&batch.context)?;
        let align = &batch.align;
        let f = self.forward(&batch.context);
        let mut p = f.logits.clone();
        softmax_rows(&mut p);
        let table = align.music_emb.slice(s![..VOCAB_SIZE, ..]);
        let states = p.dot(&table);
        let (cos, d_states) = align.cosine_with_states(states.view(), &batch.prompt)?;
        let loss = 1.0 - cos;
        if !want_grad {
            return Ok((loss, None));
        }
        let d_p = -d_states.dot(&table.t());
        let dots = (&p * &d_p).sum_axis(Axis(1));
        let mut d_logits = d_p;
        for (mut row, (p_row, dot)) in d_logits.rows_mut().into_iter().zip(p.rows().into_iter().zip(dots.iter())) {
            row.zip_mut_with(&p_row, |g, &pr| *g = pr * (*g - dot));
        }
        Ok((loss, Some(self.backward(&f, &d_logits))))
    }

    fn backward(&self, f: &Forward, d_logits: &Array2<f64>) -> Gradients {
        let d_out = f.h.t().dot(d_logits);
        let d_h = d_logits.dot(&self.out.t());
        let d_wo = f.o.t().dot(&d_h);
        let d_o = d_h.dot(&self.wo.t());
        let (dq, dk, dv) = attention_backward(f.q.view(), f.k.view(), f.v.view(), f.a.view(), d_o.view());
        let xt = f.x.t();
        let (d_wq, d_wk, d_wv) = (xt.dot(&dq), xt.dot(&dk), xt.dot(&dv));
        let d_x = d_h + dq.dot(&self.wq.t()) + dk.dot(&self.wk.t()) + dv.dot(&self.wv.t());
        let mut d_tok = GradTensor::sparse(self.tok_emb.dim());
        let mut d_pos = GradTensor::sparse(self.pos_emb.dim());
        for (pos, (&id, row)) in f.ids.iter().zip(d_x.rows()).enumerate() {
            d_tok.add_row(id, row);
            d_pos.add_row(pos, row);
        }
        Gradients(vec![
            d_tok,
            d_pos,
            GradTensor::Dense(d_wq),
            GradTensor::Dense(d_wk),
            GradTensor::Dense(d_wv),
            GradTensor::Dense(d_wo),
            GradTensor::Dense(d_out),
        ])
    }

    pub fn write_to(&self, w: impl std::io::Write) -> Result<(), GenerateError> {
        let config = serde_json::to_value(&self.config).expect("config serializes");
        let tensors: Vec<(&str, &Array2<f64>)> = DECODER_PARAM_NAMES.iter().copied().zip(self.params()).collect();
        write_checkpoint(w, CHECKPOINT_KIND, &config, &tensors).map_err(CheckpointError::from)?;
        Ok(())
    }

    pub fn read_from(r: impl std::io::Read) -> Result<Self, GenerateError> {
        let ck = read_checkpoint(r)?;
        ck.expect_kind(CHECKPOINT_KIND)?;
        let config: DecoderConfig =
            serde_json::from_value(ck.config.clone()).map_err(|e| CheckpointError::Config(e.to_string()))?;
        let mut model = DecoderModel::new(config)?;
        ck.restore(&DECODER_PARAM_NAMES, model.params_mut())?;
        Ok(model)
    }
}

/// Keys and values of every position fed so far.
pub struct KvCache<'a> {
    model: &'a DecoderModel,
    keys: Array2<f64>,
    values: Array2<f64>,
    len: usize,
}

impl KvCache<'_> {
    /// Number of generated tokens fed so far (the begin token excluded).
    pub fn len(&self) -> usize {
        self.len.saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Feeds the next input (the begin token first) and returns the scores
    /// for the position after it.
    pub fn step(&mut self, token: usize) -> Result<Array1<f64>, GenerateError> {
        let m = self.model;
        if self.len > m.config.max_len {
            return Err(GenerateError::PrefixTooLong { len: self.len, max: m.config.max_len });
        }
        let x = &m.tok_emb.row(token) + &m.pos_emb.row(self.len);
        let q = x.dot(&m.wq);
        let row = |v: Array1<f64>| v.insert_axis(Axis(0));
        self.keys = concatenate![Axis(0), self.keys, row(x.dot(&m.wk))];
        self.values = concatenate![Axis(0), self.values, row(x.dot(&m.wv))];
        self.len += 1;
        let scale = (m.config.embed_dim as f64).sqrt().recip();
        let weights = softmax((self.keys.dot(&q) * scale).view());
        let o = weights.dot(&self.values);
        let h = &x + &o.dot(&m.wo);
        Ok(h.dot(&m.out))
    }
}

impl Differentiable for DecoderModel {
    type Batch = GuidedBatch;
    type Error = GenerateError;

    fn param_names(&self) -> Vec<&'static str> {
        DECODER_PARAM_NAMES.to_vec()
    }

    fn params(&self) -> Vec<&Array2<f64>> {
        vec![&self.tok_emb, &self.pos_emb, &self.wq, &self.wk, &self.wv, &self.wo, &self.out]
    }

    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![
            &mut self.tok_emb,
            &mut self.pos_emb,
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.out,
        ]
    }

    fn loss(&self, batch: &GuidedBatch) -> Result<f64, GenerateError> {
        Ok(self.guided(batch, false)?.0)
    }

    fn loss_and_grad(&self, batch: &GuidedBatch) -> Result<(f64, Gradients), GenerateError> {
        let (loss, grads) = self.guided(batch, true)?;
        Ok((loss, grads.expect("requested")))
    }
}
