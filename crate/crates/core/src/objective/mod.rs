//! Local losses `f_i`, their gradient oracles, and reference minimizers.

pub mod data;
mod logistic;
mod mlp;
mod quadratic;

pub use data::{generate_clustered_data, ClientData, ClusterConfig, Dataset};
pub use logistic::LogisticObjective;
pub use mlp::MlpObjective;
pub use quadratic::QuadraticObjective;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Axis};
use rand::seq::index::sample;
use rand::Rng;

use crate::error::{FedError, Result};
use crate::layered::{LayerShape, LayeredMatrix};

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Logistic(LogisticObjective),
    Quadratic(QuadraticObjective),
    Mlp(MlpObjective),
}

impl Objective {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Objective::Logistic(_) => "logistic",
            Objective::Quadratic(_) => "quadratic",
            Objective::Mlp(_) => "mlp",
        }
    }

    pub fn n_clients(&self) -> usize {
        match self {
            Objective::Logistic(o) => o.data.n_clients(),
            Objective::Quadratic(o) => o.n_clients(),
            Objective::Mlp(o) => o.data.n_clients(),
        }
    }

    pub fn shapes(&self) -> Vec<LayerShape> {
        match self {
            Objective::Logistic(o) => o.shapes(),
            Objective::Quadratic(o) => o.shapes(),
            Objective::Mlp(o) => o.shapes(),
        }
    }

    pub fn dataset(&self) -> Option<&Dataset> {
        match self {
            Objective::Logistic(o) => Some(&o.data),
            Objective::Mlp(o) => Some(&o.data),
            Objective::Quadratic(_) => None,
        }
    }

    /// Number of samples a client holds. A quadratic client counts as one.
    pub fn samples(&self, client: usize) -> Result<usize> {
        self.check_client(client)?;
        Ok(match self.dataset() {
            Some(d) => d.clients()[client].samples(),
            None => 1,
        })
    }

    /// Zeros for the convex objectives, a seeded random draw for the MLP.
    pub fn initial_point(&self, seed: u64) -> LayeredMatrix {
        match self {
            Objective::Mlp(o) => o.initial_point(seed),
            _ => LayeredMatrix::zeros(&self.shapes()),
        }
    }

    fn check_client(&self, client: usize) -> Result<()> {
        let n = self.n_clients();
        if client >= n {
            return Err(FedError::ClientOutOfRange { client, n });
        }
        Ok(())
    }

    fn check_point(&self, x: &LayeredMatrix) -> Result<()> {
        let want = self.shapes();
        let got = x.shapes();
        if want.len() != got.len() {
            return Err(FedError::LayerCountMismatch {
                expected: want.len(),
                got: got.len(),
            });
        }
        for (l, (a, b)) in want.iter().zip(&got).enumerate() {
            if a != b {
                return Err(FedError::ShapeMismatch {
                    layer: l,
                    left: (a.rows, a.cols),
                    right: (b.rows, b.cols),
                });
            }
        }
        Ok(())
    }

    pub fn loss(&self, client: usize, x: &LayeredMatrix) -> Result<f64> {
        self.check_client(client)?;
        self.check_point(x)?;
        Ok(match self {
            Objective::Logistic(o) => {
                let c = &o.data.clients()[client];
                o.loss_on(c.features.view(), c.labels.view(), x)
            }
            Objective::Mlp(o) => {
                let c = &o.data.clients()[client];
                o.loss_on(c.features.view(), c.labels.view(), x)
            }
            Objective::Quadratic(o) => o.loss(client, x),
        })
    }

    /// Exact `grad f_i(x)`.
    pub fn full_gradient(&self, client: usize, x: &LayeredMatrix) -> Result<LayeredMatrix> {
        self.check_client(client)?;
        self.check_point(x)?;
        Ok(match self {
            Objective::Logistic(o) => {
                let c = &o.data.clients()[client];
                o.gradient_on(c.features.view(), c.labels.view(), x)
            }
            Objective::Mlp(o) => {
                let c = &o.data.clients()[client];
                o.gradient_on(c.features.view(), c.labels.view(), x)
            }
            Objective::Quadratic(o) => o.gradient(client, x),
        })
    }

    /// Mean per-sample gradient over the given (ascending) sample indices,
    /// plus the full regularizer.
    pub fn gradient_on_samples(&self, client: usize, x: &LayeredMatrix, indices: &[usize]) -> Result<LayeredMatrix> {
        self.check_client(client)?;
        self.check_point(x)?;
        let samples = self.samples(client)?;
        if indices.is_empty() || indices.iter().any(|&j| j >= samples) {
            return Err(FedError::BatchOutOfRange {
                batch: indices.len(),
                samples,
            });
        }
        Ok(match self {
            Objective::Logistic(o) => {
                let c = &o.data.clients()[client];
                let a = c.features.select(Axis(0), indices);
                let y: Array1<f64> = indices.iter().map(|&j| c.labels[j]).collect();
                o.gradient_on(a.view(), y.view(), x)
            }
            Objective::Mlp(o) => {
                let c = &o.data.clients()[client];
                let a = c.features.select(Axis(0), indices);
                let y: Array1<f64> = indices.iter().map(|&j| c.labels[j]).collect();
                o.gradient_on(a.view(), y.view(), x)
            }
            Objective::Quadratic(o) => o.gradient(client, x),
        })
    }

    /// Unbiased estimate from `batch_size` samples drawn without replacement.
    pub fn minibatch_gradient<R: Rng + ?Sized>(
        &self,
        client: usize,
        x: &LayeredMatrix,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<LayeredMatrix> {
        let samples = self.samples(client)?;
        if batch_size == 0 || batch_size > samples {
            return Err(FedError::BatchOutOfRange {
                batch: batch_size,
                samples,
            });
        }
        if batch_size == samples {
            return self.full_gradient(client, x);
        }
        let mut idx = sample(rng, samples, batch_size).into_vec();
        idx.sort_unstable();
        self.gradient_on_samples(client, x, &idx)
    }

    /// `f(x) = (1/n) sum_i f_i(x)`.
    pub fn global_loss(&self, x: &LayeredMatrix) -> Result<f64> {
        let n = self.n_clients();
        let mut acc = 0.0;
        for i in 0..n {
            acc += self.loss(i, x)?;
        }
        Ok(acc / n as f64)
    }

    /// `grad f(x)`, averaged in client order.
    pub fn global_gradient(&self, x: &LayeredMatrix) -> Result<LayeredMatrix> {
        let grads = (0..self.n_clients())
            .map(|i| self.full_gradient(i, x))
            .collect::<Result<Vec<_>>>()?;
        LayeredMatrix::average(&grads)
    }

    /// Upper bound on the per-client smoothness constant `L_f`, when one is
    /// available in closed form.
    pub fn smoothness_bound(&self) -> Option<f64> {
        match self {
            Objective::Logistic(o) => {
                let worst = o
                    .data
                    .clients()
                    .iter()
                    .map(|c| {
                        let gram = c.features.t().dot(&c.features);
                        max_eigenvalue(&gram) / (4.0 * c.samples() as f64)
                    })
                    .fold(0.0_f64, f64::max);
                Some(o.lambda + worst)
            }
            Objective::Quadratic(o) => {
                let mut worst = 0.0_f64;
                for i in 0..o.n_clients() {
                    for l in 0..o.shapes().len() {
                        worst = worst.max(max_eigenvalue(o.hessian(i, l)));
                    }
                }
                Some(worst)
            }
            Objective::Mlp(_) => None,
        }
    }

    /// Minimizer of `f` via damped Newton, iterated until `||grad f|| <= tol`.
    pub fn solve_reference(&self, tol: f64) -> Result<ReferenceSolution> {
        const MAX_ITERS: usize = 200;
        match self {
            Objective::Mlp(_) => Err(FedError::Unsupported(
                "reference solution needs a strongly convex objective".into(),
            )),
            Objective::Quadratic(o) => {
                let hs = o.mean_hessians();
                let mut x = LayeredMatrix::zeros(&self.shapes());
                let mut gnorm = self.global_gradient(&x)?.norm();
                for _ in 0..MAX_ITERS {
                    if gnorm <= tol {
                        return Ok(ReferenceSolution { x_star: x, grad_norm: gnorm });
                    }
                    let g = self.global_gradient(&x)?;
                    let mut layers = Vec::with_capacity(hs.len());
                    for (h, (xl, gl)) in hs.iter().zip(x.layers().iter().zip(g.layers())) {
                        let step = solve_spd(h, gl)?;
                        layers.push(xl - &step);
                    }
                    x = LayeredMatrix::from_layers(layers);
                    let next = self.global_gradient(&x)?.norm();
                    if next >= gnorm && next > tol {
                        // roundoff floor
                        return Err(FedError::NewtonNonConvergence { iterations: MAX_ITERS, grad_norm: next });
                    }
                    gnorm = next;
                }
                Err(FedError::NewtonNonConvergence {
                    iterations: MAX_ITERS,
                    grad_norm: gnorm,
                })
            }
            Objective::Logistic(o) => {
                if o.lambda <= 0.0 {
                    return Err(FedError::Unsupported(
                        "logistic reference solution needs lambda > 0".into(),
                    ));
                }
                let mut x = LayeredMatrix::zeros(&self.shapes());
                let mut f = self.global_loss(&x)?;
                for _ in 0..MAX_ITERS {
                    let g = self.global_gradient(&x)?;
                    let gnorm = g.norm();
                    if gnorm <= tol {
                        return Ok(ReferenceSolution { x_star: x, grad_norm: gnorm });
                    }
                    let h = o.hessian(&x);
                    let dir = solve_spd(&h, g.layer(0))?;
                    let slope = -(g.layer(0) * &dir).sum();
                    let mut t = 1.0;
                    loop {
                        let cand = LayeredMatrix::from_layers(vec![x.layer(0) - &(&dir * t)]);
                        let fc = self.global_loss(&cand)?;
                        // near x* the decrease drops below the resolution of f
                        let flat = fc <= f + 1e-4 * t * slope
                            || (fc <= f + 1e-14 * f.abs() && self.global_gradient(&cand)?.norm() < gnorm);
                        if flat || t < 1e-10 {
                            x = cand;
                            f = fc;
                            break;
                        }
                        t *= 0.5;
                    }
                }
                let gnorm = self.global_gradient(&x)?.norm();
                if gnorm <= tol {
                    return Ok(ReferenceSolution { x_star: x, grad_norm: gnorm });
                }
                Err(FedError::NewtonNonConvergence {
                    iterations: MAX_ITERS,
                    grad_norm: gnorm,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x_star: LayeredMatrix,
    /// `||grad f(x_star)||` at termination.
    pub grad_norm: f64,
}

impl ReferenceSolution {
    /// `||x - x*|| / ||x*||`.
    pub fn relative_error(&self, x: &LayeredMatrix) -> Result<f64> {
        Ok(x.sub(&self.x_star)?.norm() / self.x_star.norm())
    }
}

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[[r, c]])
}

fn max_eigenvalue(a: &Array2<f64>) -> f64 {
    let sym = to_dmatrix(a);
    let sym = (&sym + sym.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Solves `H X = B` for symmetric positive-definite `H` (column by column).
fn solve_spd(h: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    let chol = to_dmatrix(h)
        .cholesky()
        .ok_or_else(|| FedError::Unsupported("Hessian is not positive definite".into()))?;
    let mut out = Array2::<f64>::zeros(b.dim());
    for (j, col) in b.axis_iter(Axis(1)).enumerate() {
        let rhs = DVector::from_iterator(col.len(), col.iter().copied());
        let sol = chol.solve(&rhs);
        for (i, v) in sol.iter().enumerate() {
            out[[i, j]] = *v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_logistic(n: usize, samples: usize, m: usize, lambda: f64) -> Objective {
        let data = generate_clustered_data(&ClusterConfig {
            n_clients: n,
            samples_total: samples,
            feature_dim: m,
            heterogeneity_noise: 0.1,
            seed: 5,
        })
        .unwrap();
        Objective::Logistic(LogisticObjective::new(data, lambda))
    }

    fn small_mlp() -> Objective {
        let data = generate_clustered_data(&ClusterConfig {
            n_clients: 3,
            samples_total: 90,
            feature_dim: 6,
            heterogeneity_noise: 0.1,
            seed: 6,
        })
        .unwrap();
        Objective::Mlp(MlpObjective::new(data, 4))
    }

    fn small_quadratic() -> Objective {
        let shapes = [LayerShape::new(5, 2).unwrap(), LayerShape::new(3, 3).unwrap()];
        Objective::Quadratic(QuadraticObjective::random_heterogeneous(3, &shapes, 0.5, 2.0, 9).unwrap())
    }

    fn random_point(shapes: &[LayerShape], rng: &mut ChaCha8Rng) -> LayeredMatrix {
        LayeredMatrix::from_layers(
            shapes
                .iter()
                .map(|s| Array2::from_shape_fn((s.rows, s.cols), |_| rng.random_range(-1.0..1.0)))
                .collect(),
        )
    }

    /// Central differences with step 1e-5 on every coordinate.
    fn finite_difference(obj: &Objective, client: usize, x: &LayeredMatrix) -> Vec<f64> {
        let flat = x.to_flat();
        let shapes = x.shapes();
        let h = 1e-5;
        (0..flat.len())
            .map(|k| {
                let mut plus = flat.clone();
                let mut minus = flat.clone();
                plus[k] += h;
                minus[k] -= h;
                let fp = obj.loss(client, &LayeredMatrix::from_flat(&shapes, &plus).unwrap()).unwrap();
                let fm = obj.loss(client, &LayeredMatrix::from_flat(&shapes, &minus).unwrap()).unwrap();
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    fn assert_fd_agrees(obj: &Objective) {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..20 {
            let x = random_point(&obj.shapes(), &mut rng);
            let client = trial % obj.n_clients();
            let g = obj.full_gradient(client, &x).unwrap().to_flat();
            let fd = finite_difference(obj, client, &x);
            let num: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let den: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-8);
            assert!(num / den <= 1e-6, "{} trial {trial}: rel {}", obj.kind_name(), num / den);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        assert_fd_agrees(&small_logistic(3, 60, 5, 0.01));
        assert_fd_agrees(&small_quadratic());
        assert_fd_agrees(&small_mlp());
    }

    #[test]
    fn quadratic_identity_gradient_is_x() {
        let shapes = [LayerShape::new(3, 2).unwrap()];
        let obj = Objective::Quadratic(QuadraticObjective::identity_shifted(2, &LayeredMatrix::zeros(&shapes)).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_point(&shapes, &mut rng);
        assert_eq!(obj.full_gradient(1, &x).unwrap(), x);
    }

    #[test]
    fn logistic_gradient_at_origin() {
        let obj = small_logistic(2, 40, 4, 0.0);
        let Objective::Logistic(o) = &obj else { unreachable!() };
        let x = LayeredMatrix::zeros(&obj.shapes());
        for (i, c) in o.data.clients().iter().enumerate() {
            let g = obj.full_gradient(i, &x).unwrap();
            let s = c.samples() as f64;
            for k in 0..4 {
                let mut want = 0.0;
                for (row, y) in c.features.outer_iter().zip(c.labels.iter()) {
                    want += y * row[k];
                }
                want *= -1.0 / (2.0 * s);
                assert!((g.layer(0)[[k, 0]] - want).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn client_index_checked() {
        let obj = small_quadratic();
        let x = LayeredMatrix::zeros(&obj.shapes());
        assert_eq!(
            obj.full_gradient(3, &x).unwrap_err(),
            FedError::ClientOutOfRange { client: 3, n: 3 }
        );
    }

    #[test]
    fn full_batch_equals_full_gradient_bit_exact() {
        for obj in [small_logistic(3, 60, 5, 0.01), small_mlp()] {
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let x = random_point(&obj.shapes(), &mut rng);
            let s = obj.samples(1).unwrap();
            let mut brng = rng_for(0, &[]);
            assert_eq!(
                obj.minibatch_gradient(1, &x, s, &mut brng).unwrap(),
                obj.full_gradient(1, &x).unwrap()
            );
            assert!(obj.minibatch_gradient(1, &x, s + 1, &mut brng).is_err());
            assert!(obj.minibatch_gradient(1, &x, 0, &mut brng).is_err());
        }
    }

    #[test]
    fn single_sample_batch() {
        let data = Dataset::new(vec![ClientData {
            features: ndarray::array![[0.5, -1.0, 2.0]],
            labels: ndarray::array![1.0],
        }])
        .unwrap();
        let obj = Objective::Logistic(LogisticObjective::new(data, 0.1));
        let x = LayeredMatrix::from_layers(vec![ndarray::array![[0.1], [0.2], [-0.3]]]);
        let mut rng = rng_for(1, &[]);
        let g = obj.minibatch_gradient(0, &x, 1, &mut rng).unwrap();
        assert_eq!(g, obj.gradient_on_samples(0, &x, &[0]).unwrap());
    }

    #[test]
    fn minibatch_is_unbiased() {
        let obj = small_logistic(2, 200, 4, 0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_point(&obj.shapes(), &mut rng);
        let client = 0;
        let samples = obj.samples(client).unwrap();
        let batch = 10;
        let draws = 10_000;
        let full = obj.full_gradient(client, &x).unwrap().to_flat();

        // per-coordinate variance of one sample gradient, for sigma of the batch mean
        let per_sample: Vec<Vec<f64>> = (0..samples)
            .map(|j| obj.gradient_on_samples(client, &x, &[j]).unwrap().to_flat())
            .collect();
        let dim = full.len();
        let mut var = vec![0.0; dim];
        for g in &per_sample {
            for k in 0..dim {
                var[k] += (g[k] - full[k]).powi(2) / samples as f64;
            }
        }
        let fpc = (samples - batch) as f64 / (samples - 1) as f64;

        let mut mean = vec![0.0; dim];
        let mut brng = rng_for(11, &[]);
        for _ in 0..draws {
            let g = obj.minibatch_gradient(client, &x, batch, &mut brng).unwrap().to_flat();
            for k in 0..dim {
                mean[k] += g[k] / draws as f64;
            }
        }
        for k in 0..dim {
            let sigma = (var[k] / batch as f64 * fpc / draws as f64).sqrt();
            assert!((mean[k] - full[k]).abs() <= 3.0 * sigma, "coord {k}");
        }
    }

    #[test]
    fn reference_for_identity_quadratic_is_shift() {
        let shapes = [LayerShape::new(3, 2).unwrap(), LayerShape::new(2, 1).unwrap()];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = random_point(&shapes, &mut rng);
        let obj = Objective::Quadratic(QuadraticObjective::identity_shifted(4, &c).unwrap());
        let r = obj.solve_reference(1e-12).unwrap();
        assert!(r.x_star.sub(&c).unwrap().max_abs() <= 1e-15);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn reference_for_random_quadratic_matches_direct_solve() {
        let obj = small_quadratic();
        let Objective::Quadratic(q) = &obj else { unreachable!() };
        let r = obj.solve_reference(1e-12).unwrap();
        // Gaussian elimination on the averaged system, independent of the Cholesky path
        for l in 0..2 {
            let n = q.n_clients() as f64;
            let m = q.hessian(0, l).nrows();
            let cols = q.linear_term(0).layer(l).ncols();
            let mut a = vec![vec![0.0; m + cols]; m];
            for i in 0..q.n_clients() {
                for rr in 0..m {
                    for cc in 0..m {
                        a[rr][cc] += q.hessian(i, l)[[rr, cc]] / n;
                    }
                    for cc in 0..cols {
                        a[rr][m + cc] += q.linear_term(i).layer(l)[[rr, cc]] / n;
                    }
                }
            }
            for p in 0..m {
                let piv = (p..m).max_by(|&i, &j| a[i][p].abs().total_cmp(&a[j][p].abs())).unwrap();
                a.swap(p, piv);
                for i in 0..m {
                    if i != p {
                        let f = a[i][p] / a[p][p];
                        for k in p..m + cols {
                            a[i][k] -= f * a[p][k];
                        }
                    }
                }
            }
            for rr in 0..m {
                for cc in 0..cols {
                    let want = a[rr][m + cc] / a[rr][rr];
                    assert!((r.x_star.layer(l)[[rr, cc]] - want).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn reference_rejects_mlp_and_unregularized_logistic() {
        assert!(matches!(small_mlp().solve_reference(1e-12), Err(FedError::Unsupported(_))));
        assert!(small_logistic(2, 40, 3, 0.0).solve_reference(1e-12).is_err());
    }

    #[test]
    fn logistic_reference_certificate() {
        let obj = small_logistic(5, 1000, 6, 1e-4);
        let r = obj.solve_reference(1e-12).unwrap();
        assert!(r.grad_norm <= 1e-12);
        assert!(obj.global_gradient(&r.x_star).unwrap().norm() <= 1e-12);
    }

    #[test]
    fn smoothness_bound_dominates_sampled_curvature() {
        let obj = small_logistic(3, 150, 4, 0.01);
        let l = obj.smoothness_bound().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let x = random_point(&obj.shapes(), &mut rng);
            let y = random_point(&obj.shapes(), &mut rng);
            for i in 0..3 {
                let gx = obj.full_gradient(i, &x).unwrap();
                let gy = obj.full_gradient(i, &y).unwrap();
                let lip = gx.sub(&gy).unwrap().norm() / x.sub(&y).unwrap().norm();
                assert!(lip <= l * (1.0 + 1e-12));
            }
        }
        assert!(small_mlp().smoothness_bound().is_none());
    }
}
