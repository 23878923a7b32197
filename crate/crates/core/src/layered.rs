//! Layerwise matrix collections.
//!
//! A model is a list of per-layer weight matrices `x_l` of shape `m_l x d_l`.
//! Every piece of algorithm state (global model, local subspace iterates,
//! dual variables, gradients) is one of these collections, and arithmetic on
//! them is always taken layer by layer.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{FedError, Result};

/// Row and column count of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerShape {
    pub rows: usize,
    pub cols: usize,
}

impl LayerShape {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(FedError::InvalidDimension(format!(
                "layer shape must be positive, got {rows}x{cols}"
            )));
        }
        Ok(Self { rows, cols })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One real scalar per layer, e.g. `m_l / r_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerScalars(Vec<f64>);

impl LayerScalars {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(FedError::InvalidDimension(format!("non-finite layer scalar {v}")));
        }
        Ok(Self(values))
    }

    pub fn uniform(value: f64, layers: usize) -> Result<Self> {
        Self::new(vec![value; layers])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Ordered collection of dense row-major layer matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredMatrix {
    layers: Vec<Array2<f64>>,
}

impl LayeredMatrix {
    pub fn from_layers(layers: Vec<Array2<f64>>) -> Self {
        Self { layers }
    }

    pub fn zeros(shapes: &[LayerShape]) -> Self {
        Self {
            layers: shapes
                .iter()
                .map(|s| Array2::zeros((s.rows, s.cols)))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Array2<f64>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Array2<f64>> {
        self.layers
    }

    pub fn layer(&self, l: usize) -> &Array2<f64> {
        &self.layers[l]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn shapes(&self) -> Vec<LayerShape> {
        self.layers
            .iter()
            .map(|a| LayerShape {
                rows: a.nrows(),
                cols: a.ncols(),
            })
            .collect()
    }

    /// Total scalar count across layers.
    pub fn num_scalars(&self) -> usize {
        self.layers.iter().map(|a| a.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|a| a.iter().all(|v| v.is_finite()))
    }

    /// Flattens layers in order, each row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|a| a.iter().copied()).collect()
    }

    /// Inverse of [`to_flat`](Self::to_flat) for the given shapes.
    pub fn from_flat(shapes: &[LayerShape], flat: &[f64]) -> Result<Self> {
        let total: usize = shapes.iter().map(LayerShape::len).sum();
        if total != flat.len() {
            return Err(FedError::InvalidDimension(format!(
                "flat vector has {} entries, shapes need {total}",
                flat.len()
            )));
        }
        let mut offset = 0;
        let mut layers = Vec::with_capacity(shapes.len());
        for s in shapes {
            let chunk = flat[offset..offset + s.len()].to_vec();
            offset += s.len();
            layers.push(Array2::from_shape_vec((s.rows, s.cols), chunk).expect("length checked"));
        }
        Ok(Self { layers })
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(FedError::LayerCountMismatch {
                expected: self.layers.len(),
                got: other.layers.len(),
            });
        }
        for (l, (a, b)) in self.layers.iter().zip(&other.layers).enumerate() {
            if a.dim() != b.dim() {
                return Err(FedError::ShapeMismatch {
                    layer: l,
                    left: a.dim(),
                    right: b.dim(),
                });
            }
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(self.zip_with(other, |a, b| a + alpha * b))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            layers: self.layers.iter().map(|a| a.mapv(|v| s * v)).collect(),
        }
    }

    pub fn scale_layerwise(&self, s: &LayerScalars) -> Result<Self> {
        if s.len() != self.layers.len() {
            return Err(FedError::LayerCountMismatch {
                expected: self.layers.len(),
                got: s.len(),
            });
        }
        Ok(Self {
            layers: self
                .layers
                .iter()
                .zip(s.values())
                .map(|(a, &sl)| a.mapv(|v| sl * v))
                .collect(),
        })
    }

    /// Layerwise mean; summation runs in list order.
    pub fn average(xs: &[Self]) -> Result<Self> {
        let Some(first) = xs.first() else {
            return Err(FedError::EmptyAverage);
        };
        let mut acc = first.clone();
        for x in &xs[1..] {
            acc.check_same_shape(x)?;
            for (a, b) in acc.layers.iter_mut().zip(&x.layers) {
                *a += b;
            }
        }
        let inv = 1.0 / xs.len() as f64;
        for a in &mut acc.layers {
            a.mapv_inplace(|v| v * inv);
        }
        Ok(acc)
    }

    /// Sum of per-layer squared Frobenius norms.
    pub fn norm_sq(&self) -> f64 {
        self.layers
            .iter()
            .map(|a| a.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|a| a.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64 + Copy) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .zip(&other.layers)
                .map(|(a, b)| Zip::from(a).and(b).map_collect(|&x, &y| f(x, y)))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_layered(shapes: &[(usize, usize)], seed: u64) -> LayeredMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LayeredMatrix::from_layers(
            shapes
                .iter()
                .map(|&(r, c)| Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0)))
                .collect(),
        )
    }

    #[test]
    fn add_identity_and_inverse() {
        let x = random_layered(&[(3, 2), (4, 5)], 1);
        let z = LayeredMatrix::zeros(&x.shapes());
        assert_eq!(z.add(&x).unwrap(), x);
        let neg = x.scale(-1.0);
        assert_eq!(x.add(&neg).unwrap().norm_sq(), 0.0);
    }

    #[test]
    fn add_matches_loop_oracle() {
        let a = random_layered(&[(3, 2), (4, 5)], 2);
        let b = random_layered(&[(3, 2), (4, 5)], 3);
        let c = a.add(&b).unwrap();
        for l in 0..2 {
            let (rows, cols) = a.layer(l).dim();
            for i in 0..rows {
                for j in 0..cols {
                    assert_eq!(c.layer(l)[[i, j]], a.layer(l)[[i, j]] + b.layer(l)[[i, j]]);
                }
            }
        }
    }

    #[test]
    fn add_shape_mismatch_names_layer() {
        let a = random_layered(&[(3, 2), (4, 5)], 2);
        let b = random_layered(&[(3, 2), (4, 4)], 3);
        assert_eq!(
            a.add(&b).unwrap_err(),
            FedError::ShapeMismatch {
                layer: 1,
                left: (4, 5),
                right: (4, 4)
            }
        );
    }

    #[test]
    fn scale_layerwise_cases() {
        let x = random_layered(&[(2, 3), (3, 1)], 4);
        let ones = LayerScalars::uniform(1.0, 2).unwrap();
        assert_eq!(x.scale_layerwise(&ones).unwrap(), x);
        let zeros = LayerScalars::uniform(0.0, 2).unwrap();
        assert_eq!(x.scale_layerwise(&zeros).unwrap().norm_sq(), 0.0);

        let s = LayerScalars::new(vec![2.0, 0.5]).unwrap();
        let y = x.scale_layerwise(&s).unwrap();
        for (l, factor) in [2.0, 0.5].into_iter().enumerate() {
            for (got, orig) in y.layer(l).iter().zip(x.layer(l).iter()) {
                assert_eq!(*got, factor * orig);
            }
        }
        assert!(x
            .scale_layerwise(&LayerScalars::uniform(1.0, 3).unwrap())
            .is_err());
        assert!(LayerScalars::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn average_cases() {
        let x = random_layered(&[(2, 2), (1, 3)], 5);
        let copies = vec![x.clone(); 4];
        let avg = LayeredMatrix::average(&copies).unwrap();
        assert!(avg.sub(&x).unwrap().max_abs() < 1e-15);
        let pair = [x.clone(), x.scale(-1.0)];
        assert_eq!(LayeredMatrix::average(&pair).unwrap().norm_sq(), 0.0);
        assert_eq!(LayeredMatrix::average(&[]), Err(FedError::EmptyAverage));

        let xs: Vec<_> = (0..3).map(|s| random_layered(&[(2, 2), (1, 3)], 10 + s)).collect();
        let avg = LayeredMatrix::average(&xs).unwrap();
        for l in 0..2 {
            for (idx, got) in avg.layer(l).indexed_iter() {
                let mut sum = 0.0;
                for x in &xs {
                    sum += x.layer(l)[idx];
                }
                let want = sum / 3.0;
                assert!((got - want).abs() <= 1e-14 * want.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn norm_sq_cases() {
        let shapes = [LayerShape::new(2, 2).unwrap()];
        assert_eq!(LayeredMatrix::zeros(&shapes).norm_sq(), 0.0);
        let x = LayeredMatrix::from_layers(vec![ndarray::array![[3.0, 4.0]]]);
        assert_eq!(x.norm_sq(), 25.0);

        let y = random_layered(&[(3, 4), (5, 2)], 7);
        let flat = y.to_flat();
        let dot: f64 = flat.iter().map(|v| v * v).sum();
        assert!((y.norm_sq() - dot).abs() <= 1e-14 * dot);
    }

    #[test]
    fn flat_round_trip() {
        let y = random_layered(&[(3, 4), (5, 2)], 8);
        let back = LayeredMatrix::from_flat(&y.shapes(), &y.to_flat()).unwrap();
        assert_eq!(back, y);
        assert!(LayerShape::new(0, 3).is_err());
    }

    proptest! {
        #[test]
        fn add_commutes_and_associates(seed in 0u64..10_000, r in 1usize..6, c in 1usize..6) {
            let a = random_layered(&[(r, c), (c, r)], seed);
            let b = random_layered(&[(r, c), (c, r)], seed + 1);
            let d = random_layered(&[(r, c), (c, r)], seed + 2);
            prop_assert_eq!(a.add(&b).unwrap(), b.add(&a).unwrap());
            let left = a.add(&b).unwrap().add(&d).unwrap();
            let right = a.add(&b.add(&d).unwrap()).unwrap();
            let diff = left.sub(&right).unwrap().norm();
            prop_assert!(diff <= 1e-12 * left.norm().max(1.0));
        }

        #[test]
        fn triangle_inequality(seed in 0u64..10_000, r in 1usize..8, c in 1usize..8) {
            let a = random_layered(&[(r, c), (2, c)], seed);
            let b = random_layered(&[(r, c), (2, c)], seed ^ 0xabc);
            let lhs = a.add(&b).unwrap().norm_sq();
            let rhs = (a.norm_sq().sqrt() + b.norm_sq().sqrt()).powi(2);
            prop_assert!(lhs <= rhs * (1.0 + 1e-12));
        }

        #[test]
        fn singleton_average_is_identity(seed in 0u64..10_000) {
            let a = random_layered(&[(3, 2), (2, 2)], seed);
            let before = a.clone();
            let avg = LayeredMatrix::average(std::slice::from_ref(&a)).unwrap();
            prop_assert_eq!(&avg, &a);
            prop_assert_eq!(a, before);
        }
    }
}
