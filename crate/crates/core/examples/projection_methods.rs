//! Draw one projection of each kind and check the subspace constraints
//! `P^T P = (m/r) I` and `E[P P^T] = I` by Monte Carlo.

use fedsub::projection::{mc_tolerance_3sigma, validate_assumption1};
use fedsub::{LayerShape, ProjectionMethod, ProjectionSet, SubspaceDims};

fn main() -> fedsub::Result<()> {
    let shapes = [LayerShape::new(6, 1)?];
    let dims = SubspaceDims::new(vec![2]);
    for method in [ProjectionMethod::CoordinateDescent, ProjectionMethod::RandomOrthonormal, ProjectionMethod::SphericalSmoothing] {
        let p = ProjectionSet::generate(method, &shapes, &dims, 42)?;
        println!("{} (6 x 2):\n{:.3}\n", method.short_name(), p.layers()[0].to_dense());
    }

    let samples = 20_000;
    println!("{:<4} {:>3} {:>3} {:>12} {:>12} {:>10}", "kind", "m", "r", "exact dev", "mean dev", "3 sigma");
    for (m, r) in [(20, 10), (20, 2), (8, 1)] {
        for method in [ProjectionMethod::CoordinateDescent, ProjectionMethod::RandomOrthonormal, ProjectionMethod::SphericalSmoothing] {
            let tol = mc_tolerance_3sigma(m, r, samples);
            let rep = validate_assumption1(method, LayerShape::new(m, 1)?, r, samples, 1e-10, tol, 1)?;
            println!(
                "{:<4} {m:>3} {r:>3} {:>12.2e} {:>12.4} {tol:>10.4}",
                method.short_name(),
                rep.max_exact_deviation,
                rep.mean_outer_deviation
            );
        }
    }
    Ok(())
}
