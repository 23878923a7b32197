//! The dual-variable engine and the gradient-difference engine produce the
//! same iterates for every projection kind.

use fedsub::objective::QuadraticObjective;
use fedsub::{Engine, FedConfig, GradientMode, LayerShape, LayeredMatrix, Objective, ProjectionMethod, Simulation};

fn main() -> fedsub::Result<()> {
    let shapes = vec![LayerShape::new(10, 3)?, LayerShape::new(6, 2)?];
    let obj = Objective::Quadratic(QuadraticObjective::random_heterogeneous(5, &shapes, 0.5, 2.0, 9)?);
    let reference = obj.solve_reference(1e-12)?;
    for method in [
        ProjectionMethod::Identity,
        ProjectionMethod::CoordinateDescent,
        ProjectionMethod::RandomOrthonormal,
        ProjectionMethod::SphericalSmoothing,
    ] {
        let ranks = if method == ProjectionMethod::Identity { vec![10, 6] } else { vec![4, 3] };
        let cfg = |engine| FedConfig {
            rounds: 20,
            local_steps: 4,
            step_size: 0.05,
            projection: method,
            ranks: ranks.clone(),
            gradient: GradientMode::Full,
            seed: 3,
            engine,
            cost: Default::default(),
        };
        let x0 = LayeredMatrix::zeros(&shapes);
        let mut dual = Simulation::new(cfg(Engine::DualVariable), &obj, x0.clone())?;
        let mut vr = Simulation::new(cfg(Engine::VarianceReduction), &obj, x0)?;
        let mut gap = 0.0_f64;
        for _ in 0..20 {
            dual.step()?;
            vr.step()?;
            gap = gap.max(dual.model().sub(vr.model())?.max_abs());
        }
        println!(
            "{:<8} max iterate gap {gap:.2e}   ||sum_i Lambda_i||_inf {:.2e}   rel. error {:.3e}",
            method.short_name(),
            dual.dual_sum()?.max_abs(),
            reference.relative_error(dual.model())?
        );
    }
    Ok(())
}
