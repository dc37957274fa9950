//! Two embedding-table encoders joined by one bidirectional cross-attention
//! block, with projection heads and a learnable temperature.
//!
//! For a (music, text) pair the music summary is the mean over music
//! queries of attention into the text, and the text summary the mean over
//! text queries of attention into the music. Each summary passes through
//! its direction's output matrix and its modality's projection head and is
//! normalized; their dot product is the pair's cosine similarity.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::loss::{first_cross_entropy, symmetric_cross_entropy};
use super::{AlignConfig, AlignError, LossMode};
use crate::checkpoint::{read_checkpoint, write_checkpoint, CheckpointError};
use crate::grad::{Differentiable, GradTensor, Gradients};
use crate::nn::{
    attention, attention_backward, gather_rows, l2_normalize, mean_rows, normalize_backward, outer, random_matrix,
};
use crate::remi::VOCAB_SIZE;
use crate::rng::seeded;

/// Music embedding rows: the vocabulary plus one pad row.
pub const MUSIC_ROWS: usize = VOCAB_SIZE + 1;
pub const MIN_TEMPERATURE: f64 = 0.01;
pub const MAX_TEMPERATURE: f64 = 100.0;

pub const PARAM_NAMES: [&str; 13] = [
    "music_emb",
    "text_emb",
    "m2t.wq",
    "m2t.wk",
    "m2t.wv",
    "m2t.wo",
    "t2m.wq",
    "t2m.wk",
    "t2m.wv",
    "t2m.wo",
    "proj_music",
    "proj_text",
    "log_temperature",
];

/// Projections for one attention direction; queries come from the
/// direction's source modality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossBlock {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignModel {
    pub config: AlignConfig,
    pub music_emb: Array2<f64>,
    pub text_emb: Array2<f64>,
    /// Music queries over text keys and values.
    pub m2t: CrossBlock,
    /// Text queries over music keys and values.
    pub t2m: CrossBlock,
    pub proj_music: Array2<f64>,
    pub proj_text: Array2<f64>,
    /// 1×1; τ = exp of it, clamped.
    pub log_temperature: Array2<f64>,
    /// Test fixture: scales the m2t query-weight gradient by 1.1.
    #[doc(hidden)]
    pub corrupt_wq_backward: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlignPair {
    pub music: Vec<usize>,
    pub text: Vec<usize>,
}

/// One music segment with its true caption and explicit wrong captions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContrastGroup {
    pub music: Vec<usize>,
    pub positive: Vec<usize>,
    pub negatives: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AlignBatch {
    InBatch(Vec<AlignPair>),
    Pairwise(Vec<ContrastGroup>),
}

impl AlignBatch {
    pub fn mode(&self) -> LossMode {
        match self {
            AlignBatch::InBatch(_) => LossMode::InBatch,
            AlignBatch::Pairwise(_) => LossMode::Pairwise,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            AlignBatch::InBatch(p) => p.len(),
            AlignBatch::Pairwise(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A sequence's token states and its projections for both directions.
struct SeqState {
    x: Array2<f64>,
    /// Queries it issues in its own direction.
    q: Array2<f64>,
    /// Keys and values it offers to the other direction.
    k: Array2<f64>,
    v: Array2<f64>,
}

struct SeqGrad {
    dq: Array2<f64>,
    dk: Array2<f64>,
    dv: Array2<f64>,
}

impl SeqGrad {
    fn zeros_like(s: &SeqState) -> Self {
        SeqGrad { dq: Array2::zeros(s.q.dim()), dk: Array2::zeros(s.k.dim()), dv: Array2::zeros(s.v.dim()) }
    }
}

/// One direction's forward values for a pair.
struct Side {
    a: Array2<f64>,
    pooled: Array1<f64>,
    h: Array1<f64>,
    unit: Array1<f64>,
    norm: f64,
}

struct PairForward {
    music: Side,
    text: Side,
    cos: f64,
}

/// Gradients of the dense matrices, in `PARAM_NAMES` order from `m2t.wq`.
struct DenseGrads([Array2<f64>; 10]);

const M2T: usize = 0;
const T2M: usize = 4;
const PROJ_MUSIC: usize = 8;
const PROJ_TEXT: usize = 9;

impl AlignModel {
    pub fn new(config: AlignConfig) -> Result<Self, AlignError> {
        config.validate()?;
        let d = config.embed_dim;
        let mut rng = seeded(config.seed);
        let w = (d as f64).sqrt().recip();
        let block = |rng: &mut _| CrossBlock {
            wq: random_matrix(rng, d, d, w),
            wk: random_matrix(rng, d, d, w),
            wv: random_matrix(rng, d, d, w),
            wo: random_matrix(rng, d, d, w),
        };
        let m2t = block(&mut rng);
        let t2m = block(&mut rng);
        Ok(AlignModel {
            music_emb: random_matrix(&mut rng, MUSIC_ROWS, d, config.init_scale),
            text_emb: random_matrix(&mut rng, config.text_hash_buckets + 1, d, config.init_scale),
            m2t,
            t2m,
            proj_music: random_matrix(&mut rng, d, d, w),
            proj_text: random_matrix(&mut rng, d, d, w),
            log_temperature: Array2::from_elem((1, 1), config.temperature_init.ln()),
            corrupt_wq_backward: false,
            config,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    /// Raw log-temperature and whether the clamp is active.
    fn temperature_state(&self) -> (f64, bool) {
        let raw = self.log_temperature[[0, 0]].exp();
        let tau = raw.clamp(MIN_TEMPERATURE, MAX_TEMPERATURE);
        (tau, tau != raw)
    }

    pub fn temperature(&self) -> f64 {
        self.temperature_state().0
    }

    fn check_music(&self, ids: &[usize]) -> Result<(), AlignError> {
        match ids.iter().find(|&&i| i >= MUSIC_ROWS) {
            _ if ids.is_empty() => Err(AlignError::EmptySequence),
            Some(&id) => Err(AlignError::TokenOutOfRange(id)),
            None => Ok(()),
        }
    }

    fn check_text(&self, ids: &[usize]) -> Result<(), AlignError> {
        match ids.iter().find(|&&i| i >= self.text_emb.nrows()) {
            _ if ids.is_empty() => Err(AlignError::EmptySequence),
            Some(&id) => Err(AlignError::TokenOutOfRange(id)),
            None => Ok(()),
        }
    }

    /// Self-only path: mean token embedding, projection head, normalize.
    pub fn encode_music(&self, ids: &[usize]) -> Result<Array1<f64>, AlignError> {
        self.check_music(ids)?;
        let pooled = mean_rows(gather_rows(&self.music_emb, ids).view());
        Ok(l2_normalize(pooled.dot(&self.proj_music).view()).0)
    }

    pub fn encode_text(&self, ids: &[usize]) -> Result<Array1<f64>, AlignError> {
        self.check_text(ids)?;
        let pooled = mean_rows(gather_rows(&self.text_emb, ids).view());
        Ok(l2_normalize(pooled.dot(&self.proj_text).view()).0)
    }

    fn music_state(&self, x: Array2<f64>) -> SeqState {
        SeqState { q: x.dot(&self.m2t.wq), k: x.dot(&self.t2m.wk), v: x.dot(&self.t2m.wv), x }
    }

    fn text_state(&self, y: Array2<f64>) -> SeqState {
        SeqState { q: y.dot(&self.t2m.wq), k: y.dot(&self.m2t.wk), v: y.dot(&self.m2t.wv), x: y }
    }

    fn side(&self, queries: &SeqState, other: &SeqState, wo: &Array2<f64>, proj: &Array2<f64>) -> Side {
        let (out, a) = attention(queries.q.view(), other.k.view(), other.v.view(), false);
        let pooled = mean_rows(out.view());
        let h = pooled.dot(wo);
        let (unit, norm) = l2_normalize(h.dot(proj).view());
        Side { a, pooled, h, unit, norm }
    }

    fn pair_forward(&self, m: &SeqState, t: &SeqState) -> PairForward {
        let music = self.side(m, t, &self.m2t.wo, &self.proj_music);
        let text = self.side(t, m, &self.t2m.wo, &self.proj_text);
        let cos = music.unit.dot(&text.unit);
        PairForward { music, text, cos }
    }

    /// Backward of one side given the gradient on its unit output.
    #[allow(clippy::too_many_arguments)]
    fn side_backward(
        &self,
        side: &Side,
        grad_unit: Array1<f64>,
        queries: &SeqState,
        other: &SeqState,
        q_grad: &mut SeqGrad,
        other_grad: &mut SeqGrad,
        dense: &mut DenseGrads,
        base: usize,
        proj: usize,
    ) {
        let (wo, p) = if base == M2T { (&self.m2t.wo, &self.proj_music) } else { (&self.t2m.wo, &self.proj_text) };
        let du = normalize_backward(side.unit.view(), side.norm, grad_unit.view());
        dense.0[proj] += &outer(side.h.view(), du.view());
        let dh = p.dot(&du);
        dense.0[base + 3] += &outer(side.pooled.view(), dh.view());
        let d_pooled = wo.dot(&dh);
        let rows = queries.q.nrows();
        let d_out =
            (d_pooled / rows as f64).insert_axis(Axis(0)).broadcast((rows, self.embed_dim())).unwrap().to_owned();
        let (dq, dk, dv) =
            attention_backward(queries.q.view(), other.k.view(), other.v.view(), side.a.view(), d_out.view());
        q_grad.dq += &dq;
        other_grad.dk += &dk;
        other_grad.dv += &dv;
    }

    /// Accumulates the pair's gradient for `d loss / d cos = g`.
    fn pair_backward(
        &self,
        pf: &PairForward,
        g: f64,
        m: (&SeqState, &mut SeqGrad),
        t: (&SeqState, &mut SeqGrad),
        dense: &mut DenseGrads,
    ) {
        let (ms, mg) = m;
        let (ts, tg) = t;
        self.side_backward(&pf.music, &pf.text.unit * g, ms, ts, mg, tg, dense, M2T, PROJ_MUSIC);
        self.side_backward(&pf.text, &pf.music.unit * g, ts, ms, tg, mg, dense, T2M, PROJ_TEXT);
    }

    /// Pulls a sequence's projection gradients back to the weights and
    /// returns the gradient on its token states.
    fn state_backward(&self, s: &SeqState, g: &SeqGrad, music: bool, dense: &mut DenseGrads) -> Array2<f64> {
        let (q_block, kv_block, q_base, kv_base) =
            if music { (&self.m2t, &self.t2m, M2T, T2M) } else { (&self.t2m, &self.m2t, T2M, M2T) };
        let xt = s.x.t();
        let mut dwq = xt.dot(&g.dq);
        if music && self.corrupt_wq_backward {
            dwq *= 1.1;
        }
        dense.0[q_base] += &dwq;
        dense.0[kv_base + 1] += &xt.dot(&g.dk);
        dense.0[kv_base + 2] += &xt.dot(&g.dv);
        g.dq.dot(&q_block.wq.t()) + g.dk.dot(&kv_block.wk.t()) + g.dv.dot(&kv_block.wv.t())
    }

    fn zero_dense(&self) -> DenseGrads {
        let d = self.embed_dim();
        DenseGrads(std::array::from_fn(|_| Array2::zeros((d, d))))
    }

    /// Cross-path cosine for every music/text pairing, row per music.
    pub fn similarity_matrix(&self, music: &[Vec<usize>], text: &[Vec<usize>]) -> Result<Array2<f64>, AlignError> {
        music.iter().try_for_each(|m| self.check_music(m))?;
        text.iter().try_for_each(|t| self.check_text(t))?;
        let ms: Vec<SeqState> = music.iter().map(|ids| self.music_state(gather_rows(&self.music_emb, ids))).collect();
        let ts: Vec<SeqState> = text.iter().map(|ids| self.text_state(gather_rows(&self.text_emb, ids))).collect();
        Ok(Array2::from_shape_fn((ms.len(), ts.len()), |(i, j)| self.pair_forward(&ms[i], &ts[j]).cos))
    }

    /// Cross-path cosine between arbitrary music token states (rows of
    /// width `d`) and a caption, with its gradient on those states.
    pub fn cosine_with_states(
        &self,
        music_states: ArrayView2<f64>,
        text: &[usize],
    ) -> Result<(f64, Array2<f64>), AlignError> {
        self.check_text(text)?;
        if music_states.nrows() == 0 {
            return Err(AlignError::EmptySequence);
        }
        let ms = self.music_state(music_states.to_owned());
        let ts = self.text_state(gather_rows(&self.text_emb, text));
        let pf = self.pair_forward(&ms, &ts);
        let mut mg = SeqGrad::zeros_like(&ms);
        let mut tg = SeqGrad::zeros_like(&ts);
        let mut dense = self.zero_dense();
        self.pair_backward(&pf, 1.0, (&ms, &mut mg), (&ts, &mut tg), &mut dense);
        Ok((pf.cos, self.state_backward(&ms, &mg, true, &mut dense)))
    }

    fn batch_loss(&self, batch: &AlignBatch, want_grad: bool) -> Result<(f64, Option<Gradients>), AlignError> {
        let (tau, clamped) = self.temperature_state();
        let d = self.embed_dim();
        let mut music_ids: Vec<&[usize]> = Vec::new();
        let mut text_ids: Vec<&[usize]> = Vec::new();
        // (music, text, d loss / d logit) per evaluated pair
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        match batch {
            AlignBatch::InBatch(items) => {
                if items.len() < 2 {
                    return Err(AlignError::BatchTooSmall(items.len()));
                }
                for p in items {
                    music_ids.push(&p.music);
                    text_ids.push(&p.text);
                }
                for i in 0..items.len() {
                    for j in 0..items.len() {
                        pairs.push((i, j));
                    }
                }
            }
            AlignBatch::Pairwise(groups) => {
                if groups.is_empty() {
                    return Err(AlignError::BatchTooSmall(0));
                }
                for (g, group) in groups.iter().enumerate() {
                    if group.negatives.is_empty() {
                        return Err(AlignError::NoNegatives);
                    }
                    music_ids.push(&group.music);
                    for t in std::iter::once(&group.positive).chain(&group.negatives) {
                        pairs.push((g, text_ids.len()));
                        text_ids.push(t);
                    }
                }
            }
        }
        music_ids.iter().try_for_each(|m| self.check_music(m))?;
        text_ids.iter().try_for_each(|t| self.check_text(t))?;
        let ms: Vec<SeqState> =
            music_ids.iter().map(|ids| self.music_state(gather_rows(&self.music_emb, ids))).collect();
        let ts: Vec<SeqState> = text_ids.iter().map(|ids| self.text_state(gather_rows(&self.text_emb, ids))).collect();
        let forwards: Vec<PairForward> = pairs.iter().map(|&(i, j)| self.pair_forward(&ms[i], &ts[j])).collect();
        let logits: Vec<f64> = forwards.iter().map(|f| f.cos / tau).collect();
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(AlignError::NonFiniteSimilarity);
        }

        let (loss, d_logits) = match batch {
            AlignBatch::InBatch(items) => {
                let n = items.len();
                let s = Array2::from_shape_vec((n, n), logits.clone()).expect("n×n pairs");
                let (loss, g) = symmetric_cross_entropy(s.view());
                (loss, g.into_raw_vec_and_offset().0)
            }
            AlignBatch::Pairwise(groups) => {
                let mut loss = 0.0;
                let mut grads = Vec::with_capacity(logits.len());
                let mut start = 0;
                let scale = 1.0 / groups.len() as f64;
                for group in groups {
                    let end = start + 1 + group.negatives.len();
                    let (l, g) = first_cross_entropy(ndarray::ArrayView1::from(&logits[start..end]));
                    loss += l * scale;
                    grads.extend(g.iter().map(|x| x * scale));
                    start = end;
                }
                (loss, grads)
            }
        };
        if !want_grad {
            return Ok((loss, None));
        }

        let mut dense = self.zero_dense();
        let mut mg: Vec<SeqGrad> = ms.iter().map(SeqGrad::zeros_like).collect();
        let mut tg: Vec<SeqGrad> = ts.iter().map(SeqGrad::zeros_like).collect();
        let mut d_log_t = 0.0;
        for (k, (&(i, j), pf)) in pairs.iter().zip(&forwards).enumerate() {
            d_log_t -= d_logits[k] * logits[k];
            self.pair_backward(pf, d_logits[k] / tau, (&ms[i], &mut mg[i]), (&ts[j], &mut tg[j]), &mut dense);
        }
        let mut music_grad = GradTensor::sparse(self.music_emb.dim());
        for ((ids, s), g) in music_ids.iter().zip(&ms).zip(&mg) {
            let dx = self.state_backward(s, g, true, &mut dense);
            for (&id, row) in ids.iter().zip(dx.rows()) {
                music_grad.add_row(id, row);
            }
        }
        let mut text_grad = GradTensor::sparse(self.text_emb.dim());
        for ((ids, s), g) in text_ids.iter().zip(&ts).zip(&tg) {
            let dy = self.state_backward(s, g, false, &mut dense);
            for (&id, row) in ids.iter().zip(dy.rows()) {
                text_grad.add_row(id, row);
            }
        }
        let mut tensors = vec![music_grad, text_grad];
        tensors.extend(dense.0.into_iter().map(GradTensor::Dense));
        let d_t = if clamped { 0.0 } else { d_log_t };
        tensors.push(GradTensor::Dense(Array2::from_elem((1, 1), d_t)));
        debug_assert_eq!(tensors.len(), PARAM_NAMES.len());
        debug_assert!(tensors[2].shape() == (d, d));
        Ok((loss, Some(Gradients(tensors))))
    }
}

pub const CHECKPOINT_KIND: &str = "align";

impl AlignModel {
    pub fn write_to(&self, w: impl std::io::Write) -> Result<(), AlignError> {
        let config = serde_json::to_value(&self.config).expect("config serializes");
        let tensors: Vec<(&str, &Array2<f64>)> = PARAM_NAMES.iter().copied().zip(self.params()).collect();
        write_checkpoint(w, CHECKPOINT_KIND, &config, &tensors).map_err(CheckpointError::from)?;
        Ok(())
    }

    pub fn read_from(r: impl std::io::Read) -> Result<Self, AlignError> {
        let ck = read_checkpoint(r)?;
        ck.expect_kind(CHECKPOINT_KIND)?;
        let config: AlignConfig =
            serde_json::from_value(ck.config.clone()).map_err(|e| CheckpointError::Config(e.to_string()))?;
        let mut model = AlignModel::new(config)?;
        ck.restore(&PARAM_NAMES, model.params_mut())?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), AlignError> {
        let file = std::fs::File::create(path).map_err(CheckpointError::from)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, AlignError> {
        let file = std::fs::File::open(path).map_err(CheckpointError::from)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

impl Differentiable for AlignModel {
    type Batch = AlignBatch;
    type Error = AlignError;

    fn param_names(&self) -> Vec<&'static str> {
        PARAM_NAMES.to_vec()
    }

    fn params(&self) -> Vec<&Array2<f64>> {
        vec![
            &self.music_emb,
            &self.text_emb,
            &self.m2t.wq,
            &self.m2t.wk,
            &self.m2t.wv,
            &self.m2t.wo,
            &self.t2m.wq,
            &self.t2m.wk,
            &self.t2m.wv,
            &self.t2m.wo,
            &self.proj_music,
            &self.proj_text,
            &self.log_temperature,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![
            &mut self.music_emb,
            &mut self.text_emb,
            &mut self.m2t.wq,
            &mut self.m2t.wk,
            &mut self.m2t.wv,
            &mut self.m2t.wo,
            &mut self.t2m.wq,
            &mut self.t2m.wk,
            &mut self.t2m.wv,
            &mut self.t2m.wo,
            &mut self.proj_music,
            &mut self.proj_text,
            &mut self.log_temperature,
        ]
    }

    fn loss(&self, batch: &AlignBatch) -> Result<f64, AlignError> {
        Ok(self.batch_loss(batch, false)?.0)
    }

    fn loss_and_grad(&self, batch: &AlignBatch) -> Result<(f64, Gradients), AlignError> {
        let (loss, grads) = self.batch_loss(batch, true)?;
        Ok((loss, grads.expect("requested")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::grad_check;
    use rand::Rng;

    fn small_config() -> AlignConfig {
        AlignConfig { embed_dim: 8, text_hash_buckets: 50, init_scale: 0.5, seed: 3, ..Default::default() }
    }

    fn random_batch(seed: u64, n: usize) -> AlignBatch {
        let mut rng = seeded(seed);
        AlignBatch::InBatch(
            (0..n)
                .map(|_| AlignPair {
                    music: (0..rng.random_range(1..12)).map(|_| rng.random_range(0..MUSIC_ROWS)).collect(),
                    text: (0..rng.random_range(1..6)).map(|_| rng.random_range(0..51)).collect(),
                })
                .collect(),
        )
    }

    #[test]
    fn encoders_are_unit_and_order_free() {
        let model = AlignModel::new(small_config()).unwrap();
        let e = model.encode_music(&[3, 9, 200]).unwrap();
        assert!((e.dot(&e) - 1.0).abs() < 1e-12);
        let f = model.encode_music(&[200, 3, 9]).unwrap();
        assert!((&e - &f).iter().all(|x| x.abs() < 1e-12));
        let one = model.encode_music(&[7]).unwrap();
        let many = model.encode_music(&[7, 7, 7, 7]).unwrap();
        assert!((&one - &many).iter().all(|x| x.abs() < 1e-12));
        assert!(matches!(model.encode_music(&[]), Err(AlignError::EmptySequence)));
        assert!(matches!(model.encode_text(&[51]), Err(AlignError::TokenOutOfRange(51))));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut model = AlignModel::new(small_config()).unwrap();
        model.log_temperature[[0, 0]] = -1.5;
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        assert_eq!(AlignModel::read_from(&buf[..]).unwrap(), model);
        assert!(AlignModel::read_from(&buf[..10]).is_err());
    }

    #[test]
    fn initial_temperature() {
        let model = AlignModel::new(small_config()).unwrap();
        assert!((model.temperature() - 0.07).abs() < 1e-12);
    }

    #[test]
    fn in_batch_gradients_check() {
        let mut model = AlignModel::new(small_config()).unwrap();
        let batch = random_batch(5, 4);
        let report = grad_check(&mut model, &batch, 1e-5, 50, 1).unwrap();
        assert!(report.passes(1e-4), "{report:#?}");
        assert_eq!(report.tensors.len(), 13);
    }

    #[test]
    fn pairwise_gradients_check() {
        let mut model = AlignModel::new(small_config()).unwrap();
        let batch = AlignBatch::Pairwise(vec![
            ContrastGroup { music: vec![1, 2, 3], positive: vec![4, 5], negatives: vec![vec![6], vec![7, 8]] },
            ContrastGroup { music: vec![9, 9, 400], positive: vec![10], negatives: vec![vec![11, 12, 13]] },
        ]);
        let report = grad_check(&mut model, &batch, 1e-5, 50, 2).unwrap();
        assert!(report.passes(1e-4), "{report:#?}");
    }

    #[test]
    fn corrupted_query_gradient_is_caught() {
        let mut model = AlignModel::new(small_config()).unwrap();
        model.corrupt_wq_backward = true;
        let report = grad_check(&mut model, &random_batch(5, 4), 1e-5, 50, 1).unwrap();
        let wq = report.tensors.iter().find(|t| t.name == "m2t.wq").unwrap();
        assert!(wq.max_rel_error > 1e-2);
    }

    #[test]
    fn state_gradient_matches_finite_differences() {
        let model = AlignModel::new(small_config()).unwrap();
        let x = random_matrix(&mut seeded(9), 5, 8, 0.5);
        let (_, grad) = model.cosine_with_states(x.view(), &[1, 2, 3]).unwrap();
        let h = 1e-6;
        for ((r, c), g) in grad.indexed_iter() {
            let mut up = x.clone();
            up[[r, c]] += h;
            let mut down = x.clone();
            down[[r, c]] -= h;
            let fd = (model.cosine_with_states(up.view(), &[1, 2, 3]).unwrap().0
                - model.cosine_with_states(down.view(), &[1, 2, 3]).unwrap().0)
                / (2.0 * h);
            assert!(crate::grad::relative_error(*g, fd) < 1e-5, "{g} vs {fd}");
        }
    }

    #[test]
    fn similarity_matrix_matches_batch_loss() {
        let model = AlignModel::new(small_config()).unwrap();
        let AlignBatch::InBatch(items) = random_batch(7, 3) else { unreachable!() };
        let s = model
            .similarity_matrix(
                &items.iter().map(|p| p.music.clone()).collect::<Vec<_>>(),
                &items.iter().map(|p| p.text.clone()).collect::<Vec<_>>(),
            )
            .unwrap();
        let expected = symmetric_cross_entropy((s / model.temperature()).view()).0;
        let loss = model.loss(&AlignBatch::InBatch(items)).unwrap();
        assert!((loss - expected).abs() < 1e-12);
    }
}
