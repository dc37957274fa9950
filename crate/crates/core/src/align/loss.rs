//! Contrastive losses on similarity logits.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::AlignError;
use crate::nn::{log_sum_exp, softmax};

/// Mean of the row-wise and column-wise cross-entropies against the
/// diagonal, halved, with its gradient.
pub fn symmetric_cross_entropy(logits: ArrayView2<f64>) -> (f64, Array2<f64>) {
    let n = logits.nrows();
    let scale = 0.5 / n as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros((n, n));
    for i in 0..n {
        let row = logits.row(i);
        loss += log_sum_exp(row) - row[i];
        let p = softmax(row);
        let mut g = grad.row_mut(i);
        g.scaled_add(scale, &p);
        g[i] -= scale;
    }
    for j in 0..n {
        let col = logits.column(j);
        loss += log_sum_exp(col) - col[j];
        let p = softmax(col);
        let mut g = grad.column_mut(j);
        g.scaled_add(scale, &p);
        g[j] -= scale;
    }
    (loss * scale, grad)
}

/// Symmetric InfoNCE over unit embeddings with `S = M Tᵀ / τ`.
pub fn info_nce(music: &Array2<f64>, text: &Array2<f64>, tau: f64) -> Result<f64, AlignError> {
    if music.nrows() < 2 || music.dim() != text.dim() {
        return Err(AlignError::BatchTooSmall(music.nrows()));
    }
    let s = music.dot(&text.t()) / tau;
    if s.iter().any(|v| !v.is_finite()) {
        return Err(AlignError::NonFiniteSimilarity);
    }
    Ok(symmetric_cross_entropy(s.view()).0)
}

/// Cross-entropy of candidate 0 among `logits`, with its gradient.
pub fn first_cross_entropy(logits: ArrayView1<f64>) -> (f64, Array1<f64>) {
    let mut grad = softmax(logits);
    grad[0] -= 1.0;
    (log_sum_exp(logits) - logits[0], grad)
}

/// Softmax cross-entropy picking the positive (`sims[0]`) out of itself and
/// the explicit negatives `sims[1..]`.
pub fn pairwise_loss(sims: &[f64], tau: f64) -> Result<f64, AlignError> {
    if sims.len() < 2 {
        return Err(AlignError::NoNegatives);
    }
    let logits = Array1::from_iter(sims.iter().map(|s| s / tau));
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(AlignError::NonFiniteSimilarity);
    }
    Ok(first_cross_entropy(logits.view()).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_by_two_identity() {
        let m = array![[1.0, 0.0], [0.0, 1.0]];
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((info_nce(&m, &m, 1.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn pairwise_reference_values() {
        assert!((pairwise_loss(&[0.3, 0.3], 1.0).unwrap() - 2f64.ln()).abs() < 1e-12);
        let expected = -(2f64.exp() / (2f64.exp() + 0.5f64.exp())).ln();
        assert!((pairwise_loss(&[2.0, 0.5], 1.0).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.2014).abs() < 1e-4);
        assert!(pairwise_loss(&[50.0, 0.0], 1.0).unwrap() < 1e-20);
        assert!(matches!(pairwise_loss(&[1.0], 1.0), Err(AlignError::NoNegatives)));
    }

    #[test]
    fn orthogonal_matches_at_low_temperature_vanish() {
        let m = Array2::<f64>::eye(4);
        assert!(info_nce(&m, &m, 0.01).unwrap() < 1e-40);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let logits = array![[0.3, -1.0, 2.0], [0.1, 0.4, -0.2], [1.5, 0.0, 0.7]];
        let (_, grad) = symmetric_cross_entropy(logits.view());
        let h = 1e-6;
        for ((r, c), g) in grad.indexed_iter() {
            let mut up = logits.clone();
            up[[r, c]] += h;
            let mut down = logits.clone();
            down[[r, c]] -= h;
            let fd = (symmetric_cross_entropy(up.view()).0 - symmetric_cross_entropy(down.view()).0) / (2.0 * h);
            assert!((fd - g).abs() < 1e-8);
        }
    }

    #[test]
    fn errors() {
        let one = array![[1.0, 0.0]];
        assert!(matches!(info_nce(&one, &one, 1.0), Err(AlignError::BatchTooSmall(1))));
        let m = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(info_nce(&m, &m, 0.0), Err(AlignError::NonFiniteSimilarity)));
    }
}
