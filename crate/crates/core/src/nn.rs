//! Dense building blocks shared by the alignment model and the decoder.
//! Activations are row-major: one row per sequence position.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Entries drawn from N(0, std²).
pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    let normal = Normal::new(0.0, std).expect("finite std");
    Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng))
}

/// Row-wise numerically stable softmax, in place.
pub fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut p = logits.mapv(|v| (v - max).exp());
    let sum = p.sum();
    p /= sum;
    p
}

/// `log Σ exp(x)` without overflow.
pub fn log_sum_exp(logits: ArrayView1<f64>) -> f64 {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    max + logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Scaled dot-product attention. Returns the outputs and the weight matrix;
/// with `causal`, query `r` sees keys `0..=r` only.
pub fn attention(
    q: ArrayView2<f64>,
    k: ArrayView2<f64>,
    v: ArrayView2<f64>,
    causal: bool,
) -> (Array2<f64>, Array2<f64>) {
    let scale = (q.ncols() as f64).sqrt().recip();
    let mut z = q.dot(&k.t()) * scale;
    if causal {
        for ((r, c), val) in z.indexed_iter_mut() {
            if c > r {
                *val = f64::NEG_INFINITY;
            }
        }
    }
    softmax_rows(&mut z);
    (z.dot(&v), z)
}

/// Gradients of [`attention`] with respect to `q`, `k` and `v`, given the
/// forward weights `a` and the output gradient.
pub fn attention_backward(
    q: ArrayView2<f64>,
    k: ArrayView2<f64>,
    v: ArrayView2<f64>,
    a: ArrayView2<f64>,
    d_out: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let scale = (q.ncols() as f64).sqrt().recip();
    let d_a = d_out.dot(&v.t());
    let dots = (&a * &d_a).sum_axis(Axis(1));
    let mut d_z = d_a;
    for (mut row, (a_row, dot)) in d_z.rows_mut().into_iter().zip(a.rows().into_iter().zip(dots.iter())) {
        row.zip_mut_with(&a_row, |g, &p| *g = p * (*g - dot));
    }
    d_z *= scale;
    (d_z.dot(&k), d_z.t().dot(&q), a.t().dot(&d_out))
}

/// Unit vector and the original norm.
pub fn l2_normalize(u: ArrayView1<f64>) -> (Array1<f64>, f64) {
    let norm = u.dot(&u).sqrt();
    (u.mapv(|x| x / norm), norm)
}

/// Pulls a gradient on `u / ‖u‖` back to `u`.
pub fn normalize_backward(unit: ArrayView1<f64>, norm: f64, grad: ArrayView1<f64>) -> Array1<f64> {
    let along = unit.dot(&grad);
    (&grad - &(&unit * along)) / norm
}

pub fn mean_rows(x: ArrayView2<f64>) -> Array1<f64> {
    x.mean_axis(Axis(0)).expect("at least one row")
}

/// `x` with rows gathered from `table`.
pub fn gather_rows(table: &Array2<f64>, ids: &[usize]) -> Array2<f64> {
    table.select(Axis(0), ids)
}

pub fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let a2 = a.insert_axis(Axis(1));
    let b2 = b.insert_axis(Axis(0));
    a2.dot(&b2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::array;

    #[test]
    fn attention_rows_sum_to_one() {
        let mut rng = seeded(0);
        let q = random_matrix(&mut rng, 5, 4, 1.0);
        let k = random_matrix(&mut rng, 3, 4, 1.0);
        let (_, a) = attention(q.view(), k.view(), k.view(), false);
        for row in a.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn singleton_key_gets_all_weight() {
        let mut rng = seeded(1);
        let q = random_matrix(&mut rng, 4, 3, 1.0);
        let k = random_matrix(&mut rng, 1, 3, 1.0);
        let (_, a) = attention(q.view(), k.view(), k.view(), false);
        assert!(a.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn identical_keys_average_values() {
        let q = array![[3.0, -1.0], [0.5, 2.0]];
        let k = array![[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]];
        let v = array![[1.0, 0.0], [2.0, 3.0], [6.0, 3.0]];
        let (out, _) = attention(q.view(), k.view(), v.view(), false);
        for row in out.rows() {
            assert!((row[0] - 3.0).abs() < 1e-12 && (row[1] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn causal_mask_hides_the_future() {
        let mut rng = seeded(2);
        let x = random_matrix(&mut rng, 4, 3, 1.0);
        let (_, a) = attention(x.view(), x.view(), x.view(), true);
        assert_eq!(a[[0, 0]], 1.0);
        for r in 0..4 {
            for c in r + 1..4 {
                assert_eq!(a[[r, c]], 0.0);
            }
        }
    }

    #[test]
    fn normalize_backward_matches_finite_differences() {
        let u = array![0.3, -1.2, 2.0];
        let g = array![1.0, 0.5, -0.25];
        let (unit, norm) = l2_normalize(u.view());
        let analytic = normalize_backward(unit.view(), norm, g.view());
        for i in 0..3 {
            let h = 1e-6;
            let f = |delta: f64| {
                let mut w = u.clone();
                w[i] += delta;
                l2_normalize(w.view()).0.dot(&g)
            };
            let fd = (f(h) - f(-h)) / (2.0 * h);
            assert!((fd - analytic[i]).abs() < 1e-8);
        }
    }
}
