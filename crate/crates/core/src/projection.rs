//! Random subspace projections.
//!
//! Each round draws one `m_l x r_l` matrix per layer satisfying
//! `P^T P = (m/r) I` exactly and `E[P P^T] = I`. The same set is shared by
//! every client in the round.

use ndarray::{Array2, Axis};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{FedError, Result};
use crate::layered::{LayerScalars, LayerShape, LayeredMatrix};
use crate::seed::{derive_seed, rng_for};

const MAX_ORTHO_RETRIES: usize = 8;
const DEGENERACY_RATIO: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionMethod {
    /// `r` distinct coordinates, columns `sqrt(m/r) e_j`.
    #[serde(alias = "cd")]
    CoordinateDescent,
    /// Orthonormalized Gaussian columns scaled by `sqrt(m/r)`.
    #[serde(alias = "rd")]
    RandomOrthonormal,
    /// Uniform sphere directions (orthonormalized when `r > 1`), scaled by `sqrt(m/r)`.
    #[serde(alias = "ss")]
    SphericalSmoothing,
    Identity,
}

impl ProjectionMethod {
    pub const ALL: [ProjectionMethod; 4] = [
        ProjectionMethod::CoordinateDescent,
        ProjectionMethod::RandomOrthonormal,
        ProjectionMethod::SphericalSmoothing,
        ProjectionMethod::Identity,
    ];

    pub fn short_name(&self) -> &'static str {
        match self {
            ProjectionMethod::CoordinateDescent => "cd",
            ProjectionMethod::RandomOrthonormal => "rd",
            ProjectionMethod::SphericalSmoothing => "ss",
            ProjectionMethod::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cd" | "coordinate-descent" => Some(Self::CoordinateDescent),
            "rd" | "random-orthonormal" => Some(Self::RandomOrthonormal),
            "ss" | "spherical-smoothing" => Some(Self::SphericalSmoothing),
            "identity" | "i" => Some(Self::Identity),
            _ => None,
        }
    }
}

/// Per-layer subspace ranks `r_l`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubspaceDims(Vec<usize>);

impl SubspaceDims {
    pub fn new(ranks: Vec<usize>) -> Self {
        Self(ranks)
    }

    /// Full rank on every layer (`r_l = m_l`).
    pub fn full(shapes: &[LayerShape]) -> Self {
        Self(shapes.iter().map(|s| s.rows).collect())
    }

    /// The same rank on every layer, clamped to each layer's row count.
    pub fn uniform_clamped(rank: usize, shapes: &[LayerShape]) -> Self {
        Self(shapes.iter().map(|s| rank.min(s.rows)).collect())
    }

    pub fn ranks(&self) -> &[usize] {
        &self.0
    }

    pub fn validate(&self, shapes: &[LayerShape]) -> Result<()> {
        if self.0.len() != shapes.len() {
            return Err(FedError::LayerCountMismatch {
                expected: shapes.len(),
                got: self.0.len(),
            });
        }
        for (l, (&r, s)) in self.0.iter().zip(shapes).enumerate() {
            if r == 0 {
                return Err(FedError::InvalidDimension(format!("rank 0 at layer {l}")));
            }
            if r > s.rows {
                return Err(FedError::RankExceedsRows {
                    layer: l,
                    rank: r,
                    rows: s.rows,
                });
            }
        }
        Ok(())
    }

    /// `m_l / r_l` per layer.
    pub fn m_over_r(&self, shapes: &[LayerShape]) -> LayerScalars {
        LayerScalars::new(
            self.0
                .iter()
                .zip(shapes)
                .map(|(&r, s)| s.rows as f64 / r as f64)
                .collect(),
        )
        .expect("positive dims give finite ratios")
    }

    /// `r_l / m_l` per layer.
    pub fn r_over_m(&self, shapes: &[LayerShape]) -> LayerScalars {
        LayerScalars::new(
            self.0
                .iter()
                .zip(shapes)
                .map(|(&r, s)| r as f64 / s.rows as f64)
                .collect(),
        )
        .expect("positive dims give finite ratios")
    }

    pub fn theta_m(&self, shapes: &[LayerShape]) -> f64 {
        self.m_over_r(shapes).max()
    }

    pub fn theta_r(&self, shapes: &[LayerShape]) -> f64 {
        self.r_over_m(shapes).max()
    }

    /// Shapes `r_l x d_l` of the subspace variables.
    pub fn subspace_shapes(&self, shapes: &[LayerShape]) -> Vec<LayerShape> {
        self.0
            .iter()
            .zip(shapes)
            .map(|(&r, s)| LayerShape { rows: r, cols: s.cols })
            .collect()
    }
}

/// One layer's projection. Identity layers are never materialized.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerProjection {
    Identity { dim: usize },
    Dense(Array2<f64>),
}

impl LayerProjection {
    pub fn rows(&self) -> usize {
        match self {
            LayerProjection::Identity { dim } => *dim,
            LayerProjection::Dense(p) => p.nrows(),
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            LayerProjection::Identity { dim } => *dim,
            LayerProjection::Dense(p) => p.ncols(),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, LayerProjection::Identity { .. })
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            LayerProjection::Identity { dim } => Array2::eye(*dim),
            LayerProjection::Dense(p) => p.clone(),
        }
    }

    fn down(&self, g: &Array2<f64>) -> Array2<f64> {
        match self {
            LayerProjection::Identity { .. } => g.clone(),
            LayerProjection::Dense(p) => p.t().dot(g),
        }
    }

    fn up(&self, b: &Array2<f64>) -> Array2<f64> {
        match self {
            LayerProjection::Identity { .. } => b.clone(),
            LayerProjection::Dense(p) => p.dot(b),
        }
    }
}

/// Knobs used only by validators.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GenerateOptions {
    /// Drop the `sqrt(m/r)` factor. Produces matrices that violate the
    /// projection constraint; exists for negative-control checks.
    pub omit_scaling: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSet {
    layers: Vec<LayerProjection>,
    method: ProjectionMethod,
    round_seed: u64,
}

impl ProjectionSet {
    pub fn generate(
        method: ProjectionMethod,
        shapes: &[LayerShape],
        dims: &SubspaceDims,
        round_seed: u64,
    ) -> Result<Self> {
        Self::generate_with(method, shapes, dims, round_seed, GenerateOptions::default())
    }

    pub fn generate_with(
        method: ProjectionMethod,
        shapes: &[LayerShape],
        dims: &SubspaceDims,
        round_seed: u64,
        opts: GenerateOptions,
    ) -> Result<Self> {
        dims.validate(shapes)?;
        let mut layers = Vec::with_capacity(shapes.len());
        for (l, (s, &r)) in shapes.iter().zip(dims.ranks()).enumerate() {
            let m = s.rows;
            let scale = if opts.omit_scaling {
                1.0
            } else {
                (m as f64 / r as f64).sqrt()
            };
            let layer = match method {
                ProjectionMethod::Identity => {
                    if r != m {
                        return Err(FedError::InvalidDimension(format!(
                            "identity projection needs r = m at layer {l} (r = {r}, m = {m})"
                        )));
                    }
                    LayerProjection::Identity { dim: m }
                }
                ProjectionMethod::CoordinateDescent => {
                    let mut rng = rng_for(round_seed, &[l as u64]);
                    let mut p = Array2::zeros((m, r));
                    for (col, row) in sample(&mut rng, m, r).into_iter().enumerate() {
                        p[[row, col]] = scale;
                    }
                    LayerProjection::Dense(p)
                }
                ProjectionMethod::RandomOrthonormal | ProjectionMethod::SphericalSmoothing => {
                    let sphere = method == ProjectionMethod::SphericalSmoothing;
                    let q = orthonormal_draw(m, r, round_seed, l, sphere)?;
                    LayerProjection::Dense(q.mapv(|v| v * scale))
                }
            };
            layers.push(layer);
        }
        Ok(Self {
            layers,
            method,
            round_seed,
        })
    }

    pub fn identity(shapes: &[LayerShape]) -> Self {
        Self {
            layers: shapes
                .iter()
                .map(|s| LayerProjection::Identity { dim: s.rows })
                .collect(),
            method: ProjectionMethod::Identity,
            round_seed: 0,
        }
    }

    pub fn layers(&self) -> &[LayerProjection] {
        &self.layers
    }

    pub fn method(&self) -> ProjectionMethod {
        self.method
    }

    pub fn round_seed(&self) -> u64 {
        self.round_seed
    }

    pub fn dims(&self) -> SubspaceDims {
        SubspaceDims::new(self.layers.iter().map(LayerProjection::rank).collect())
    }

    /// `P^T g`, shape `r_l x d_l` per layer.
    pub fn project_down(&self, g: &LayeredMatrix) -> Result<LayeredMatrix> {
        self.check_layers(g, |p| p.rows())?;
        Ok(LayeredMatrix::from_layers(
            self.layers.iter().zip(g.layers()).map(|(p, gl)| p.down(gl)).collect(),
        ))
    }

    /// `P B`, shape `m_l x d_l` per layer.
    pub fn project_up(&self, b: &LayeredMatrix) -> Result<LayeredMatrix> {
        self.check_layers(b, |p| p.rank())?;
        Ok(LayeredMatrix::from_layers(
            self.layers.iter().zip(b.layers()).map(|(p, bl)| p.up(bl)).collect(),
        ))
    }

    /// `(P_next)^T (P_prev V)`, evaluated as two products.
    pub fn transport(
        next: &ProjectionSet,
        prev: &ProjectionSet,
        v: &LayeredMatrix,
    ) -> Result<LayeredMatrix> {
        if next.layers.len() != prev.layers.len() {
            return Err(FedError::LayerCountMismatch {
                expected: prev.layers.len(),
                got: next.layers.len(),
            });
        }
        for (l, (a, b)) in next.layers.iter().zip(&prev.layers).enumerate() {
            if a.rows() != b.rows() {
                return Err(FedError::ShapeMismatch {
                    layer: l,
                    left: (a.rows(), a.rank()),
                    right: (b.rows(), b.rank()),
                });
            }
        }
        let lifted = prev.project_up(v)?;
        next.project_down(&lifted)
    }

    /// Model flop count `sum_l m_l r_l d_l` of one `P B` or `P^T g` product,
    /// skipping identity layers.
    pub fn matmul_flops(&self, cols: &[usize]) -> u64 {
        self.layers
            .iter()
            .zip(cols)
            .filter(|(p, _)| !p.is_identity())
            .map(|(p, &d)| (p.rows() * p.rank() * d) as u64)
            .sum()
    }

    /// Scalars held to store this set (zero for identity layers).
    pub fn stored_scalars(&self) -> u64 {
        self.layers
            .iter()
            .filter(|p| !p.is_identity())
            .map(|p| (p.rows() * p.rank()) as u64)
            .sum()
    }

    fn check_layers(&self, x: &LayeredMatrix, want_rows: impl Fn(&LayerProjection) -> usize) -> Result<()> {
        if x.num_layers() != self.layers.len() {
            return Err(FedError::LayerCountMismatch {
                expected: self.layers.len(),
                got: x.num_layers(),
            });
        }
        for (l, (p, a)) in self.layers.iter().zip(x.layers()).enumerate() {
            if a.nrows() != want_rows(p) {
                return Err(FedError::ShapeMismatch {
                    layer: l,
                    left: (want_rows(p), a.ncols()),
                    right: a.dim(),
                });
            }
        }
        Ok(())
    }
}

/// `m x r` matrix with orthonormal columns. Gaussian columns are optionally
/// normalized onto the unit sphere first, then orthogonalized by two passes
/// of modified Gram-Schmidt. A near-dependent draw is resampled.
fn orthonormal_draw(m: usize, r: usize, round_seed: u64, layer: usize, sphere: bool) -> Result<Array2<f64>> {
    for attempt in 0..=MAX_ORTHO_RETRIES {
        let mut rng = rng_for(derive_seed(round_seed, &[layer as u64]), &[attempt as u64]);
        let mut g = Array2::<f64>::zeros((m, r));
        for v in g.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        if sphere {
            for mut col in g.axis_iter_mut(Axis(1)) {
                let n = col.dot(&col).sqrt();
                col.mapv_inplace(|v| v / n);
            }
        }
        if let Some(q) = gram_schmidt(g) {
            return Ok(q);
        }
    }
    Err(FedError::DegenerateProjection {
        layer,
        retries: MAX_ORTHO_RETRIES,
    })
}

fn gram_schmidt(mut a: Array2<f64>) -> Option<Array2<f64>> {
    let r = a.ncols();
    for j in 0..r {
        let original = a.column(j).dot(&a.column(j)).sqrt();
        if original == 0.0 {
            return None;
        }
        for _pass in 0..2 {
            for i in 0..j {
                let qi = a.column(i).to_owned();
                let proj = qi.dot(&a.column(j));
                a.column_mut(j).scaled_add(-proj, &qi);
            }
        }
        let n = a.column(j).dot(&a.column(j)).sqrt();
        if n < DEGENERACY_RATIO * original {
            return None;
        }
        a.column_mut(j).mapv_inplace(|v| v / n);
    }
    Some(a)
}

/// Outcome of a Monte-Carlo check of the projection constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct Assumption1Report {
    pub method: ProjectionMethod,
    pub rows: usize,
    pub rank: usize,
    pub samples: usize,
    /// Max entrywise `|P^T P - (m/r) I|` over all samples.
    pub max_exact_deviation: f64,
    /// `|| mean(P P^T) - I ||_F`.
    pub mean_outer_deviation: f64,
    pub tol_exact: f64,
    pub tol_mc: f64,
    pub passed: bool,
}

/// Three times the root-mean-square Frobenius error of the sample mean of
/// `P P^T` over `n` draws. For any `P` with `P^T P = (m/r) I` and
/// `E[P P^T] = I`, a single draw has `E ||P P^T - I||_F^2 = m^2/r - m`.
pub fn mc_tolerance_3sigma(m: usize, r: usize, n: usize) -> f64 {
    let m = m as f64;
    let r = r as f64;
    3.0 * ((m * m / r - m) / n as f64).sqrt()
}

pub fn validate_assumption1(
    method: ProjectionMethod,
    shape: LayerShape,
    rank: usize,
    n_samples: usize,
    tol_exact: f64,
    tol_mc: f64,
    seed: u64,
) -> Result<Assumption1Report> {
    validate_assumption1_with(method, shape, rank, n_samples, tol_exact, tol_mc, seed, GenerateOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn validate_assumption1_with(
    method: ProjectionMethod,
    shape: LayerShape,
    rank: usize,
    n_samples: usize,
    tol_exact: f64,
    tol_mc: f64,
    seed: u64,
    opts: GenerateOptions,
) -> Result<Assumption1Report> {
    if n_samples == 0 {
        return Err(FedError::InvalidDimension("n_samples must be >= 1".into()));
    }
    let m = shape.rows;
    let shapes = [shape];
    let dims = SubspaceDims::new(vec![rank]);
    let ratio = m as f64 / rank as f64;
    let target = Array2::<f64>::eye(rank) * ratio;
    let mut max_dev = 0.0_f64;
    let mut outer_sum = Array2::<f64>::zeros((m, m));
    for s in 0..n_samples {
        let set = ProjectionSet::generate_with(method, &shapes, &dims, derive_seed(seed, &[s as u64]), opts)?;
        let p = set.layers()[0].to_dense();
        let gram = p.t().dot(&p);
        let dev = (&gram - &target).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        max_dev = max_dev.max(dev);
        outer_sum += &p.dot(&p.t());
    }
    let mean = outer_sum / n_samples as f64;
    let mean_dev = (&mean - &Array2::<f64>::eye(m))
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    Ok(Assumption1Report {
        method,
        rows: m,
        rank,
        samples: n_samples,
        max_exact_deviation: max_dev,
        mean_outer_deviation: mean_dev,
        tol_exact,
        tol_mc,
        passed: max_dev <= tol_exact && mean_dev <= tol_mc,
    })
}
