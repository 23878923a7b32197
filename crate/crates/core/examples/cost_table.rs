//! Analytic per-client, per-round costs for each engine next to the
//! counters measured while running it.

use fedsub::cost::{tally_round, CostParams};
use fedsub::objective::QuadraticObjective;
use fedsub::{Engine, FedConfig, GradientMode, LayerShape, LayeredMatrix, Objective, ProjectionMethod, Simulation, SubspaceDims};

fn main() -> fedsub::Result<()> {
    let shapes = vec![LayerShape::new(64, 16)?, LayerShape::new(16, 4)?];
    let dims = SubspaceDims::new(vec![8, 4]);
    let tau = 5;
    let obj = Objective::Quadratic(QuadraticObjective::random_heterogeneous(2, &shapes, 0.5, 2.0, 1)?);
    println!("{:<16} {:<9} {:>8} {:>10} {:>10} {:>8}  measured", "engine", "proj", "uplink", "matmul", "gradcost", "memory");
    for engine in Engine::ALL {
        for method in [ProjectionMethod::Identity, ProjectionMethod::CoordinateDescent] {
            let ranks = if method == ProjectionMethod::Identity { vec![64, 16] } else { dims.ranks().to_vec() };
            let model = tally_round(engine, method, &shapes, &SubspaceDims::new(ranks.clone()), tau, &CostParams::default());
            let cfg = FedConfig {
                rounds: 1,
                local_steps: tau,
                step_size: 0.01,
                projection: method,
                ranks,
                gradient: GradientMode::Full,
                seed: 0,
                engine,
                cost: Default::default(),
            };
            let measured = Simulation::new(cfg, &obj, LayeredMatrix::zeros(&shapes))?.step()?.cost;
            println!(
                "{:<16} {:<9} {:>8} {:>10} {:>10} {:>8}  {}",
                engine.name(),
                method.short_name(),
                model.uplink_scalars,
                model.matmul_flops,
                model.gradient_cost_units,
                model.memory_scalars,
                if measured == model { "equal" } else { "DIFFERS" }
            );
        }
    }
    Ok(())
}
