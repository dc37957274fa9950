//! Top-p (nucleus) sampling.

use ndarray::ArrayView1;
use rand::Rng;

use crate::nn::softmax;

/// Slack on the cumulative mass so rounding cannot push a boundary token
/// out of the nucleus.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// The smallest prefix of the probability-sorted distribution (ties broken
/// by lower id) whose mass reaches `p`, as (id, renormalized probability).
/// `p >= 1` keeps every id.
pub fn nucleus(logits: ArrayView1<f64>, p: f64) -> Vec<(usize, f64)> {
    let probs = softmax(logits);
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut kept = Vec::new();
    let mut mass = 0.0;
    for id in order {
        kept.push((id, probs[id]));
        mass += probs[id];
        if p < 1.0 && mass >= p - MASS_TOLERANCE {
            break;
        }
    }
    kept.into_iter().map(|(id, q)| (id, q / mass)).collect()
}

/// Draws one id from the nucleus of `logits`; `p` in (0, 1].
pub fn nucleus_sample(logits: ArrayView1<f64>, p: f64, rng: &mut impl Rng) -> usize {
    let set = nucleus(logits, p);
    let mut u: f64 = rng.random();
    for &(id, q) in &set {
        if u < q {
            return id;
        }
        u -= q;
    }
    set.last().expect("nonempty nucleus").0
}
