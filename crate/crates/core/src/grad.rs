//! Gradient containers, the SGD update and a central-difference gradient
//! checker for any model exposing its parameters as named matrices.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::Serialize;

use crate::rng::seeded;

/// A gradient shaped like one parameter tensor. Embedding tables get
/// `Rows`, holding only the rows a batch touched.
#[derive(Clone, Debug, PartialEq)]
pub enum GradTensor {
    Dense(Array2<f64>),
    Rows { shape: (usize, usize), rows: BTreeMap<usize, Array1<f64>> },
}

impl GradTensor {
    pub fn sparse(shape: (usize, usize)) -> Self {
        GradTensor::Rows { shape, rows: BTreeMap::new() }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            GradTensor::Dense(m) => m.dim(),
            GradTensor::Rows { shape, .. } => *shape,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        match self {
            GradTensor::Dense(m) => m[[row, col]],
            GradTensor::Rows { rows, .. } => rows.get(&row).map_or(0.0, |r| r[col]),
        }
    }

    /// Adds `delta` to row `row`.
    pub fn add_row(&mut self, row: usize, delta: ndarray::ArrayView1<f64>) {
        match self {
            GradTensor::Dense(m) => {
                let mut r = m.row_mut(row);
                r += &delta;
            }
            GradTensor::Rows { rows, .. } => {
                let cols = delta.len();
                let entry = rows.entry(row).or_insert_with(|| Array1::zeros(cols));
                *entry += &delta;
            }
        }
    }

    pub fn squared_norm(&self) -> f64 {
        match self {
            GradTensor::Dense(m) => m.iter().map(|x| x * x).sum(),
            GradTensor::Rows { rows, .. } => rows.values().flat_map(|r| r.iter()).map(|x| x * x).sum(),
        }
    }

    /// Rows that may hold a nonzero entry.
    pub fn support(&self) -> Vec<usize> {
        match self {
            GradTensor::Dense(m) => (0..m.nrows()).collect(),
            GradTensor::Rows { rows, .. } => rows.keys().copied().collect(),
        }
    }

    /// `param -= lr * self`.
    pub fn descend(&self, param: &mut Array2<f64>, lr: f64) {
        match self {
            GradTensor::Dense(m) => param.scaled_add(-lr, m),
            GradTensor::Rows { rows, .. } => {
                for (&r, g) in rows {
                    param.row_mut(r).scaled_add(-lr, g);
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        match self {
            GradTensor::Dense(m) => *m *= factor,
            GradTensor::Rows { rows, .. } => rows.values_mut().for_each(|r| *r *= factor),
        }
    }
}

/// One gradient per parameter tensor, in the model's parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<GradTensor>);

impl Gradients {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(GradTensor::squared_norm).sum::<f64>().sqrt()
    }
}

/// A model whose scalar loss on a batch has an analytic gradient.
pub trait Differentiable {
    type Batch;
    type Error;

    /// Parameter tensor names, in the order of [`Self::params`].
    fn param_names(&self) -> Vec<&'static str>;
    fn params(&self) -> Vec<&Array2<f64>>;
    fn params_mut(&mut self) -> Vec<&mut Array2<f64>>;
    fn loss(&self, batch: &Self::Batch) -> Result<f64, Self::Error>;
    fn loss_and_grad(&self, batch: &Self::Batch) -> Result<(f64, Gradients), Self::Error>;

    /// Plain gradient descent.
    fn sgd_step(&mut self, grads: &Gradients, lr: f64) {
        for (param, grad) in self.params_mut().into_iter().zip(&grads.0) {
            grad.descend(param, lr);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: &'static str,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error() < tolerance
    }
}

pub const DEFAULT_SAMPLES_PER_TENSOR: usize = 50;

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares analytic gradients with central differences of step `h` on
/// `samples` entries per tensor (all entries if fewer). Sparse tensors are
/// sampled from the rows the batch touched. The model is restored after
/// every probe.
pub fn grad_check<M: Differentiable>(
    model: &mut M,
    batch: &M::Batch,
    h: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport, M::Error> {
    let (_, grads) = model.loss_and_grad(batch)?;
    let names = model.param_names();
    let mut rng = seeded(seed);
    let mut tensors = Vec::with_capacity(names.len());
    for (t, name) in names.into_iter().enumerate() {
        let grad = &grads.0[t];
        let (_, cols) = grad.shape();
        let rows = grad.support();
        let total = rows.len() * cols;
        let picks: Vec<(usize, usize)> = if total <= samples {
            rows.iter().flat_map(|&r| (0..cols).map(move |c| (r, c))).collect()
        } else {
            (0..samples).map(|_| (rows[rng.random_range(0..rows.len())], rng.random_range(0..cols))).collect()
        };
        let mut max_rel_error = 0.0f64;
        for &(r, c) in &picks {
            let original = model.params()[t][[r, c]];
            model.params_mut()[t][[r, c]] = original + h;
            let up = model.loss(batch)?;
            model.params_mut()[t][[r, c]] = original - h;
            let down = model.loss(batch)?;
            model.params_mut()[t][[r, c]] = original;
            let numeric = (up - down) / (2.0 * h);
            max_rel_error = max_rel_error.max(relative_error(grad.get(r, c), numeric));
        }
        tensors.push(TensorCheck { name, checked: picks.len(), max_rel_error });
    }
    Ok(GradCheckReport { tensors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// loss = ½‖W x − y‖²
    struct Linear {
        w: Array2<f64>,
        wrong: bool,
    }

    impl Differentiable for Linear {
        type Batch = (Array1<f64>, Array1<f64>);
        type Error = ();
        fn param_names(&self) -> Vec<&'static str> {
            vec!["w"]
        }
        fn params(&self) -> Vec<&Array2<f64>> {
            vec![&self.w]
        }
        fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
            vec![&mut self.w]
        }
        fn loss(&self, (x, y): &Self::Batch) -> Result<f64, ()> {
            let r = self.w.dot(x) - y;
            Ok(0.5 * r.dot(&r))
        }
        fn loss_and_grad(&self, batch: &Self::Batch) -> Result<(f64, Gradients), ()> {
            let (x, y) = batch;
            let r = self.w.dot(x) - y;
            let mut g = crate::nn::outer(r.view(), x.view());
            if self.wrong {
                g *= 1.01;
            }
            Ok((0.5 * r.dot(&r), Gradients(vec![GradTensor::Dense(g)])))
        }
    }

    #[test]
    fn linear_model_passes_and_corruption_fails() {
        let batch = (array![1.0, -2.0, 0.5], array![0.3, 0.7]);
        let mut model = Linear { w: array![[0.1, 0.2, 0.3], [-0.4, 0.5, 0.6]], wrong: false };
        let report = grad_check(&mut model, &batch, 1e-5, 50, 0).unwrap();
        assert_eq!(report.tensors[0].checked, 6);
        assert!(report.passes(1e-6), "{report:?}");
        model.wrong = true;
        assert!(!grad_check(&mut model, &batch, 1e-5, 50, 0).unwrap().passes(1e-4));
    }

    #[test]
    fn sparse_rows_descend_only_their_rows() {
        let mut g = GradTensor::sparse((3, 2));
        g.add_row(1, array![1.0, 2.0].view());
        g.add_row(1, array![1.0, 0.0].view());
        let mut p = Array2::<f64>::zeros((3, 2));
        g.descend(&mut p, 0.5);
        assert_eq!(p, array![[0.0, 0.0], [-1.0, -1.0], [0.0, 0.0]]);
        assert_eq!(g.support(), vec![1]);
        assert_eq!(g.squared_norm(), 8.0);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-12, 0.0) - 1e-4).abs() < 1e-18);
    }
}
