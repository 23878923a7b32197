use std::path::Path;

use rand::Rng;

use crate::error::{FedError, Result};
use crate::federation::{Engine, FedConfig, GradientMode, Simulation};
use crate::layered::{LayerShape, LayeredMatrix};
use crate::objective::{Objective, QuadraticObjective};
use crate::projection::{mc_tolerance_3sigma, validate_assumption1_with, GenerateOptions, ProjectionMethod};
use crate::seed::{derive_seed, rng_for};

use super::spec::ExperimentSpec;

/// Projection draws per Monte-Carlo check.
pub const MC_SAMPLES: usize = 4000;
const FD_POINTS: usize = 3;
const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-6;
const DUAL_SUM_TOL: f64 = 1e-9;
const EQUIVALENCE_TOL: f64 = 1e-10;
const EXACT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: String, value: f64, tolerance: f64) -> Self {
        Self {
            name,
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
        let mut s = format!("{:<width$}  {:>12}  {:>12}  result\n", "check", "value", "tolerance");
        for c in &self.checks {
            s += &format!(
                "{:<width$}  {:>12.3e}  {:>12.3e}  {}\n",
                c.name,
                c.value,
                c.tolerance,
                if c.passed { "pass" } else { "FAIL" }
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["check", "value", "tolerance", "passed"])?;
        for c in &self.checks {
            w.write_record([
                c.name.clone(),
                format!("{:e}", c.value),
                format!("{:e}", c.tolerance),
                c.passed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the validator suite for a spec. Configuration errors (including a
/// rank above a layer's row count) are returned before any check runs.
pub fn validate(spec: &ExperimentSpec) -> Result<ValidationReport> {
    spec.validate()?;
    let mut checks = Vec::new();
    let shapes = spec.objective.shapes()?;
    let seed = spec.federation.seed;

    let mut methods: Vec<ProjectionMethod> = Vec::new();
    for m in spec.projection_methods() {
        if m != ProjectionMethod::Identity && !methods.contains(&m) {
            methods.push(m);
        }
    }
    let ranks = spec.rank_settings()?;
    for method in &methods {
        let opts = GenerateOptions {
            omit_scaling: spec.debug.corrupt_cd_scaling && *method == ProjectionMethod::CoordinateDescent,
        };
        for rs in &ranks {
            for (l, (shape, &r)) in shapes.iter().zip(rs).enumerate() {
                let one_col = LayerShape { rows: shape.rows, cols: 1 };
                let tol_mc = mc_tolerance_3sigma(shape.rows, r, MC_SAMPLES);
                let rep = validate_assumption1_with(*method, one_col, r, MC_SAMPLES, EXACT_TOL, tol_mc, seed, opts)?;
                let tag = format!("{}/layer{l}/m{}/r{r}", method.short_name(), shape.rows);
                checks.push(Check::new(format!("assumption1-exact/{tag}"), rep.max_exact_deviation, EXACT_TOL));
                checks.push(Check::new(format!("assumption1-mc/{tag}"), rep.mean_outer_deviation, tol_mc));
            }
        }
    }

    let obj = spec.objective.build()?;
    checks.push(Check::new(
        format!("gradient-fd/{}", obj.kind_name()),
        finite_difference_error(&obj, seed)?,
        FD_TOL,
    ));

    let mut probe_methods = methods.clone();
    probe_methods.push(ProjectionMethod::Identity);
    for method in probe_methods {
        let (dual_sum, gap) = equivalence_probe(method, seed)?;
        checks.push(Check::new(format!("dual-sum/{}", method.short_name()), dual_sum, DUAL_SUM_TOL));
        checks.push(Check::new(
            format!("engine-equivalence/{}", method.short_name()),
            gap,
            EQUIVALENCE_TOL,
        ));
    }
    Ok(ValidationReport { checks })
}

/// Largest relative distance between the analytic gradient and central
/// differences, over a few random points and clients.
pub fn finite_difference_error(obj: &Objective, seed: u64) -> Result<f64> {
    let shapes = obj.shapes();
    let mut rng = rng_for(seed, &[0x4644]);
    let mut worst = 0.0_f64;
    for t in 0..FD_POINTS {
        let x = LayeredMatrix::from_layers(
            shapes
                .iter()
                .map(|s| ndarray::Array2::from_shape_fn((s.rows, s.cols), |_| rng.random_range(-1.0..1.0)))
                .collect(),
        );
        let client = t % obj.n_clients();
        let g = obj.full_gradient(client, &x)?.to_flat();
        let flat = x.to_flat();
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, gk) in g.iter().enumerate() {
            let mut p = flat.clone();
            let mut q = flat.clone();
            p[k] += FD_STEP;
            q[k] -= FD_STEP;
            let fd = (obj.loss(client, &LayeredMatrix::from_flat(&shapes, &p)?)?
                - obj.loss(client, &LayeredMatrix::from_flat(&shapes, &q)?)?)
                / (2.0 * FD_STEP);
            num += (fd - gk) * (fd - gk);
            den += fd * fd;
        }
        worst = worst.max(num.sqrt() / den.sqrt().max(1e-8));
    }
    Ok(worst)
}

/// Runs the dual-variable and gradient-difference engines side by side on a
/// small two-layer quadratic. Returns the largest `||sum_i Lambda_i||_inf`
/// and the largest relative gap between the two model sequences.
pub fn equivalence_probe(method: ProjectionMethod, seed: u64) -> Result<(f64, f64)> {
    let shapes = [LayerShape::new(6, 2)?, LayerShape::new(4, 3)?];
    let obj = Objective::Quadratic(QuadraticObjective::random_heterogeneous(
        4,
        &shapes,
        0.5,
        2.0,
        derive_seed(seed, &[0x5052_4f42]),
    )?);
    let cfg = |engine| FedConfig {
        rounds: 10,
        local_steps: 3,
        step_size: 0.05,
        projection: method,
        ranks: vec![3, 2],
        gradient: GradientMode::Full,
        seed,
        engine,
        cost: Default::default(),
    };
    let x0 = LayeredMatrix::zeros(&shapes);
    let mut dual = Simulation::new(cfg(Engine::DualVariable), &obj, x0.clone())?;
    let mut vr = Simulation::new(cfg(Engine::VarianceReduction), &obj, x0)?;
    let mut max_sum = 0.0_f64;
    let mut max_gap = 0.0_f64;
    for _ in 0..10 {
        dual.step()?;
        vr.step()?;
        max_sum = max_sum.max(dual.dual_sum()?.max_abs());
        let gap = dual.model().sub(vr.model())?.norm() / dual.model().norm().max(1.0);
        max_gap = max_gap.max(gap);
    }
    if !max_gap.is_finite() {
        return Err(FedError::Divergence { round: 10, step: 0 });
    }
    Ok((max_sum, max_gap))
}
