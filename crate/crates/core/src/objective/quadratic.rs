//! Layerwise quadratic `f_i(x) = sum_l 1/2 <x_l, A_il x_l> - <b_il, x_l>`.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{FedError, Result};
use crate::layered::{LayerShape, LayeredMatrix};
use crate::seed::{rng_for, STREAM_DATA};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    /// `hessians[i][l]` is the symmetric `m_l x m_l` matrix of client `i`.
    hessians: Vec<Vec<Array2<f64>>>,
    linear: Vec<LayeredMatrix>,
    shapes: Vec<LayerShape>,
}

impl QuadraticObjective {
    pub fn new(hessians: Vec<Vec<Array2<f64>>>, linear: Vec<LayeredMatrix>) -> Result<Self> {
        let Some(first) = linear.first() else {
            return Err(FedError::InvalidDimension("quadratic objective needs at least one client".into()));
        };
        if hessians.len() != linear.len() {
            return Err(FedError::InvalidDimension("hessian and linear term counts differ".into()));
        }
        let shapes = first.shapes();
        for (i, (hs, b)) in hessians.iter().zip(&linear).enumerate() {
            if b.shapes() != shapes || hs.len() != shapes.len() {
                return Err(FedError::InvalidDimension(format!("client {i}: inconsistent layer shapes")));
            }
            for (l, (h, s)) in hs.iter().zip(&shapes).enumerate() {
                if h.dim() != (s.rows, s.rows) {
                    return Err(FedError::ShapeMismatch {
                        layer: l,
                        left: (s.rows, s.rows),
                        right: h.dim(),
                    });
                }
            }
        }
        Ok(Self {
            hessians,
            linear,
            shapes,
        })
    }

    /// Every client has `A_i = I` and `b_i = c`.
    pub fn identity_shifted(n_clients: usize, c: &LayeredMatrix) -> Result<Self> {
        let hs = c.shapes().iter().map(|s| Array2::eye(s.rows)).collect::<Vec<_>>();
        Self::new(vec![hs; n_clients], vec![c.clone(); n_clients])
    }

    /// Random SPD `A_il = Q diag(eig) Q^T` with eigenvalues uniform in
    /// `[eig_lo, eig_hi]`, and Gaussian `b_il`; every client differs.
    pub fn random_heterogeneous(
        n_clients: usize,
        shapes: &[LayerShape],
        eig_lo: f64,
        eig_hi: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0 < eig_lo && eig_lo <= eig_hi) {
            return Err(FedError::InvalidDimension(format!("bad eigenvalue range [{eig_lo}, {eig_hi}]")));
        }
        let mut hessians = Vec::with_capacity(n_clients);
        let mut linear = Vec::with_capacity(n_clients);
        for i in 0..n_clients {
            let mut rng = rng_for(seed, &[STREAM_DATA, i as u64]);
            let mut hs = Vec::with_capacity(shapes.len());
            let mut bs = Vec::with_capacity(shapes.len());
            for s in shapes {
                let m = s.rows;
                let g = nalgebra::DMatrix::<f64>::from_fn(m, m, |_, _| rng.sample(StandardNormal));
                let q = g.qr().q();
                let eig = nalgebra::DVector::<f64>::from_fn(m, |_, _| rng.random_range(eig_lo..=eig_hi));
                let a = &q * nalgebra::DMatrix::from_diagonal(&eig) * q.transpose();
                let a = Array2::from_shape_fn((m, m), |(r, c)| 0.5 * (a[(r, c)] + a[(c, r)]));
                hs.push(a);
                bs.push(Array2::from_shape_fn((m, s.cols), |_| rng.sample(StandardNormal)));
            }
            hessians.push(hs);
            linear.push(LayeredMatrix::from_layers(bs));
        }
        Self::new(hessians, linear)
    }

    pub fn shapes(&self) -> Vec<LayerShape> {
        self.shapes.clone()
    }

    pub fn n_clients(&self) -> usize {
        self.linear.len()
    }

    pub fn hessian(&self, client: usize, layer: usize) -> &Array2<f64> {
        &self.hessians[client][layer]
    }

    pub fn linear_term(&self, client: usize) -> &LayeredMatrix {
        &self.linear[client]
    }

    pub(crate) fn gradient(&self, client: usize, x: &LayeredMatrix) -> LayeredMatrix {
        LayeredMatrix::from_layers(
            self.hessians[client]
                .iter()
                .zip(x.layers())
                .zip(self.linear[client].layers())
                .map(|((a, xl), bl)| a.dot(xl) - bl)
                .collect(),
        )
    }

    pub(crate) fn loss(&self, client: usize, x: &LayeredMatrix) -> f64 {
        self.hessians[client]
            .iter()
            .zip(x.layers())
            .zip(self.linear[client].layers())
            .map(|((a, xl), bl)| {
                let ax = a.dot(xl);
                0.5 * (xl * &ax).sum() - (xl * bl).sum()
            })
            .sum()
    }

    /// Client-averaged `A_l` per layer.
    pub(crate) fn mean_hessians(&self) -> Vec<Array2<f64>> {
        let n = self.n_clients() as f64;
        (0..self.shapes.len())
            .map(|l| {
                let mut acc = Array2::<f64>::zeros(self.hessians[0][l].dim());
                for hs in &self.hessians {
                    acc += &hs[l];
                }
                acc / n
            })
            .collect()
    }
}
