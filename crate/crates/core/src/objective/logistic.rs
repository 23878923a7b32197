//! L2-regularized logistic regression, one `m x 1` layer.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::data::Dataset;
use crate::layered::{LayerShape, LayeredMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticObjective {
    pub data: Dataset,
    pub lambda: f64,
}

/// `log(1 + exp(t))` without overflow.
pub(crate) fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LogisticObjective {
    pub fn new(data: Dataset, lambda: f64) -> Self {
        Self { data, lambda }
    }

    pub fn shapes(&self) -> Vec<LayerShape> {
        vec![LayerShape {
            rows: self.data.feature_dim(),
            cols: 1,
        }]
    }

    /// `z = A w`, accumulated column by column.
    fn margins(a: ArrayView2<f64>, w: ArrayView1<f64>) -> Array1<f64> {
        let mut z = Array1::<f64>::zeros(a.nrows());
        for (col, wk) in a.columns().into_iter().zip(w.iter()) {
            z.scaled_add(*wk, &col);
        }
        z
    }

    pub(crate) fn loss_on(&self, a: ArrayView2<f64>, y: ArrayView1<f64>, x: &LayeredMatrix) -> f64 {
        let z = Self::margins(a, x.layer(0).column(0));
        let n = y.len() as f64;
        let data: f64 = z.iter().zip(y.iter()).map(|(zj, yj)| softplus(-yj * zj)).sum::<f64>() / n;
        data + 0.5 * self.lambda * x.norm_sq()
    }

    /// `(1/b) sum_j -y_j sigma(-y_j a_j^T x) a_j + lambda x` over the rows given.
    pub(crate) fn gradient_on(&self, a: ArrayView2<f64>, y: ArrayView1<f64>, x: &LayeredMatrix) -> LayeredMatrix {
        let w = x.layer(0).column(0);
        let inv = 1.0 / y.len() as f64;
        let mut coef = Self::margins(a, w);
        coef.zip_mut_with(&y, |zj, yj| *zj = -yj * sigmoid(-yj * *zj) * inv);
        let g = Array2::from_shape_fn((w.len(), 1), |(k, _)| a.column(k).dot(&coef) + self.lambda * w[k]);
        LayeredMatrix::from_layers(vec![g])
    }

    /// Hessian of the averaged objective `(1/n) sum_i f_i` at `x`.
    pub(crate) fn hessian(&self, x: &LayeredMatrix) -> Array2<f64> {
        let m = self.data.feature_dim();
        let n = self.data.n_clients() as f64;
        let w = x.layer(0);
        let mut h = Array2::<f64>::zeros((m, m));
        for c in self.data.clients() {
            let z = c.features.dot(w);
            let s = c.samples() as f64;
            let weights: Array1<f64> = z.column(0).mapv(|t| {
                let p = sigmoid(t);
                p * (1.0 - p)
            });
            let scaled = &c.features * &weights.view().insert_axis(Axis(1));
            h += &(c.features.t().dot(&scaled) / (s * n));
        }
        for i in 0..m {
            h[[i, i]] += self.lambda;
        }
        h
    }
}
