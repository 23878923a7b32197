//! Two-layer tanh perceptron with squared loss on `{-1, +1}` labels.
//!
//! Layers are `W1: m x h` and `W2: h x 1`; the prediction for a sample `a`
//! is `tanh(a^T W1) W2`. No bias terms.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::data::Dataset;
use crate::layered::{LayerShape, LayeredMatrix};
use crate::seed::{rng_for, STREAM_INIT};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpObjective {
    pub data: Dataset,
    pub hidden: usize,
}

impl MlpObjective {
    pub fn new(data: Dataset, hidden: usize) -> Self {
        Self { data, hidden }
    }

    pub fn shapes(&self) -> Vec<LayerShape> {
        vec![
            LayerShape {
                rows: self.data.feature_dim(),
                cols: self.hidden,
            },
            LayerShape {
                rows: self.hidden,
                cols: 1,
            },
        ]
    }

    /// Gaussian weights with variance `1 / fan_in`.
    pub fn initial_point(&self, seed: u64) -> LayeredMatrix {
        let mut rng = rng_for(seed, &[STREAM_INIT]);
        let m = self.data.feature_dim();
        let h = self.hidden;
        let s1 = 1.0 / (m as f64).sqrt();
        let s2 = 1.0 / (h as f64).sqrt();
        let w1 = Array2::from_shape_fn((m, h), |_| s1 * rng.sample::<f64, _>(StandardNormal));
        let w2 = Array2::from_shape_fn((h, 1), |_| s2 * rng.sample::<f64, _>(StandardNormal));
        LayeredMatrix::from_layers(vec![w1, w2])
    }

    fn forward(&self, a: ArrayView2<f64>, x: &LayeredMatrix) -> (Array2<f64>, Array1<f64>) {
        let hidden = a.dot(x.layer(0)).mapv(f64::tanh);
        let out = hidden.dot(x.layer(1)).index_axis_move(Axis(1), 0);
        (hidden, out)
    }

    pub(crate) fn loss_on(&self, a: ArrayView2<f64>, y: ArrayView1<f64>, x: &LayeredMatrix) -> f64 {
        let (_, out) = self.forward(a, x);
        let n = y.len() as f64;
        out.iter().zip(y.iter()).map(|(o, t)| 0.5 * (o - t) * (o - t)).sum::<f64>() / n
    }

    pub(crate) fn gradient_on(&self, a: ArrayView2<f64>, y: ArrayView1<f64>, x: &LayeredMatrix) -> LayeredMatrix {
        let (hidden, out) = self.forward(a, x);
        let inv = 1.0 / y.len() as f64;
        let delta: Array1<f64> = (&out - &y) * inv;
        let g2 = hidden.t().dot(&delta).insert_axis(Axis(1));
        let w2 = x.layer(1).column(0);
        // d/dz of tanh is 1 - tanh^2
        let mut dz = Array2::<f64>::zeros(hidden.dim());
        for ((r, c), v) in dz.indexed_iter_mut() {
            let hv = hidden[[r, c]];
            *v = delta[r] * w2[c] * (1.0 - hv * hv);
        }
        let g1 = a.t().dot(&dz);
        LayeredMatrix::from_layers(vec![g1, g2])
    }
}
