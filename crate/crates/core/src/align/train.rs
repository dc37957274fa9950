//! Seeded mini-batch SGD over contrastive pairs.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::Serialize;

use super::model::{AlignBatch, AlignModel, AlignPair, ContrastGroup};
use super::{tokenize_text, AlignConfig, AlignError, LossMode, Scheduler};
use crate::dataset::{PairExample, Polarity, SplitSet};
use crate::grad::Differentiable;
use crate::remi::RemiSequence;
use crate::rng::seeded;

/// Learning rate at `step` of `total` (0-based).
pub fn learning_rate(config: &AlignConfig, step: usize, total: usize) -> f64 {
    match config.scheduler {
        Scheduler::Constant => config.lr_max,
        Scheduler::Cosine => {
            let frac = step as f64 / total.max(1) as f64;
            config.lr_min + 0.5 * (config.lr_max - config.lr_min) * (1.0 + (PI * frac).cos())
        }
    }
}

/// Training units for one loss mode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TrainItems {
    Pairs(Vec<AlignPair>),
    Groups(Vec<ContrastGroup>),
}

impl TrainItems {
    pub fn len(&self) -> usize {
        match self {
            TrainItems::Pairs(p) => p.len(),
            TrainItems::Groups(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn batch(&self, indices: &[usize]) -> AlignBatch {
        match self {
            TrainItems::Pairs(p) => AlignBatch::InBatch(indices.iter().map(|&i| p[i].clone()).collect()),
            TrainItems::Groups(g) => AlignBatch::Pairwise(indices.iter().map(|&i| g[i].clone()).collect()),
        }
    }

    /// Index chunks of `size`; in-batch mode drops a trailing singleton,
    /// which has no negatives.
    fn chunks(&self, order: &[usize], size: usize) -> Vec<Vec<usize>> {
        let min = if matches!(self, TrainItems::Pairs(_)) { 2 } else { 1 };
        order.chunks(size).filter(|c| c.len() >= min).map(<[usize]>::to_vec).collect()
    }
}

fn music_ids(example: &PairExample) -> Result<Vec<usize>, AlignError> {
    let seq = RemiSequence::from_text(&example.music)?;
    Ok(seq.ids().iter().map(|&id| usize::from(id)).collect())
}

type SegmentCaptions = (Vec<usize>, Vec<Vec<usize>>, Vec<Vec<usize>>);

/// Turns examples into training units. In-batch mode keeps positives only;
/// pairwise mode gives each positive every negative of its segment.
pub fn prepare(examples: &[PairExample], config: &AlignConfig) -> Result<TrainItems, AlignError> {
    let buckets = config.text_hash_buckets;
    match config.loss_mode {
        LossMode::InBatch => examples
            .iter()
            .filter(|e| e.polarity == Polarity::Positive)
            .map(|e| Ok(AlignPair { music: music_ids(e)?, text: tokenize_text(&e.caption, buckets) }))
            .collect::<Result<_, _>>()
            .map(TrainItems::Pairs),
        LossMode::Pairwise => {
            let mut order: Vec<&str> = Vec::new();
            // segment id -> (music, positive captions, negative captions)
            let mut by_segment: HashMap<&str, SegmentCaptions> = HashMap::new();
            for e in examples {
                let entry = match by_segment.get_mut(e.segment_id.as_str()) {
                    Some(entry) => entry,
                    None => {
                        order.push(&e.segment_id);
                        by_segment.entry(&e.segment_id).or_insert((music_ids(e)?, Vec::new(), Vec::new()))
                    }
                };
                let text = tokenize_text(&e.caption, buckets);
                match e.polarity {
                    Polarity::Positive => entry.1.push(text),
                    Polarity::Negative => entry.2.push(text),
                }
            }
            let mut groups = Vec::new();
            for id in order {
                let (music, positives, negatives) = &by_segment[id];
                if negatives.is_empty() {
                    continue;
                }
                for positive in positives {
                    groups.push(ContrastGroup {
                        music: music.clone(),
                        positive: positive.clone(),
                        negatives: negatives.clone(),
                    });
                }
            }
            Ok(TrainItems::Groups(groups))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochLoss {
    /// 1-based.
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LossHistory(pub Vec<EpochLoss>);

impl LossHistory {
    pub fn losses(&self, split: Split) -> Vec<f64> {
        self.0.iter().filter(|r| r.split == split).map(|r| r.loss).collect()
    }

    /// `epoch,split,loss` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,split,loss\n");
        for r in &self.0 {
            let split = if r.split == Split::Train { "train" } else { "validation" };
            let _ = writeln!(out, "{},{split},{}", r.epoch, r.loss);
        }
        out
    }
}

fn mean_loss(model: &AlignModel, items: &TrainItems, size: usize) -> Result<Option<f64>, AlignError> {
    let order: Vec<usize> = (0..items.len()).collect();
    let chunks = items.chunks(&order, size);
    if chunks.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for c in &chunks {
        total += model.loss(&items.batch(c))?;
    }
    Ok(Some(total / chunks.len() as f64))
}

/// Trains from the train and validation splits of a dataset.
pub fn train(split: &SplitSet, config: &AlignConfig) -> Result<(AlignModel, LossHistory), AlignError> {
    let items = prepare(&split.train, config)?;
    let validation = prepare(&split.validation, config)?;
    train_items(&items, &validation, config)
}

/// Reshuffles with the config seed each epoch and takes one SGD step per
/// batch. Epoch train loss is the mean of the batch losses seen during the
/// epoch; validation loss is measured after it.
pub fn train_items(
    train: &TrainItems,
    validation: &TrainItems,
    config: &AlignConfig,
) -> Result<(AlignModel, LossHistory), AlignError> {
    let mut model = AlignModel::new(config.clone())?;
    let mut rng = seeded(config.seed ^ 0x5eed_5eed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let per_epoch = train.chunks(&order, config.batch_size).len();
    if per_epoch == 0 {
        return Err(AlignError::EmptyTrainingSet);
    }
    let total = per_epoch * config.epochs;
    let mut history = LossHistory::default();
    let mut step = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in train.chunks(&order, config.batch_size) {
            let lr = learning_rate(config, step, total);
            let (loss, grads) = model.loss_and_grad(&train.batch(&chunk))?;
            let grad_norm = grads.norm();
            if !loss.is_finite() || !grad_norm.is_finite() {
                return Err(AlignError::NonFinite { step, lr, grad_norm, loss });
            }
            model.sgd_step(&grads, lr);
            sum += loss;
            step += 1;
        }
        let loss = sum / per_epoch as f64;
        log::debug!("epoch {epoch}: train loss {loss:.6}");
        history.0.push(EpochLoss { epoch, split: Split::Train, loss });
        if let Some(loss) = mean_loss(&model, validation, config.batch_size)? {
            history.0.push(EpochLoss { epoch, split: Split::Validation, loss });
        }
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        let c = AlignConfig::default();
        assert_eq!(learning_rate(&c, 0, 100), 1e-4);
        assert!((learning_rate(&c, 100, 100) - 5e-6).abs() < 1e-18);
        assert!((learning_rate(&c, 50, 100) - (5e-6 + 0.5 * 9.5e-5)).abs() < 1e-18);
        let constant = AlignConfig { scheduler: Scheduler::Constant, ..c };
        assert_eq!(learning_rate(&constant, 73, 100), 1e-4);
    }

    #[test]
    fn cosine_is_monotone() {
        let c = AlignConfig::default();
        let lrs: Vec<f64> = (0..=40).map(|s| learning_rate(&c, s, 40)).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    fn examples() -> Vec<PairExample> {
        let music = "Bar_None\nBeat_0\nTempo_119\nNote_Pitch_60\nNote_Velocity_80\nNote_Duration_480\nEOS_None\n";
        let mk = |seg: &str, caption: &str, polarity| PairExample {
            segment_id: seg.into(),
            music: music.into(),
            caption: caption.into(),
            polarity,
        };
        vec![
            mk("a", "bright pop", Polarity::Positive),
            mk("a", "dark metal", Polarity::Negative),
            mk("b", "calm piano", Polarity::Positive),
            mk("b", "bright pop", Polarity::Negative),
            mk("b", "slow jazz", Polarity::Negative),
        ]
    }

    #[test]
    fn prepare_by_mode() {
        let c = AlignConfig::default();
        let TrainItems::Pairs(pairs) = prepare(&examples(), &c).unwrap() else { panic!() };
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].music.len(), 7);
        let c = AlignConfig { loss_mode: LossMode::Pairwise, ..c };
        let TrainItems::Groups(groups) = prepare(&examples(), &c).unwrap() else { panic!() };
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[1].negatives.len(), 2);
    }

    #[test]
    fn trailing_singleton_batch_is_dropped() {
        let items = TrainItems::Pairs(vec![AlignPair { music: vec![0], text: vec![0] }; 9]);
        let order: Vec<usize> = (0..9).collect();
        assert_eq!(items.chunks(&order, 8).len(), 1);
        assert_eq!(items.chunks(&order, 4).len(), 2);
    }

    #[test]
    fn training_is_deterministic_and_reports_history() {
        let config =
            AlignConfig { embed_dim: 8, text_hash_buckets: 64, epochs: 3, batch_size: 2, ..Default::default() };
        let items = prepare(&examples(), &config).unwrap();
        let (m1, h1) = train_items(&items, &items, &config).unwrap();
        let (m2, h2) = train_items(&items, &items, &config).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(m1, m2);
        assert_eq!(h1.losses(Split::Train).len(), 3);
        assert_eq!(h1.losses(Split::Validation).len(), 3);
        let csv = h1.to_csv();
        assert!(csv.starts_with("epoch,split,loss\n1,train,"));
        assert_eq!(csv.lines().count(), 7);
    }

    #[test]
    fn empty_train_split_is_an_error() {
        let items = TrainItems::Pairs(vec![]);
        assert!(matches!(train_items(&items, &items, &AlignConfig::default()), Err(AlignError::EmptyTrainingSet)));
    }
}
