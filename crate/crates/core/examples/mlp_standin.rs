//! Two-layer network on clustered data with minibatch gradients, comparing a
//! rank-3 coordinate subspace against the full space.

use fedsub::federation::run;
use fedsub::objective::{generate_clustered_data, ClusterConfig, MlpObjective};
use fedsub::{Engine, FedConfig, GradientMode, Objective, ProjectionMethod};

fn main() -> fedsub::Result<()> {
    let data = generate_clustered_data(&ClusterConfig {
        n_clients: 8,
        samples_total: 4000,
        feature_dim: 20,
        heterogeneity_noise: 0.1,
        seed: 3,
    })?;
    let obj = Objective::Mlp(MlpObjective::new(data, 16));
    for (method, ranks) in [(ProjectionMethod::CoordinateDescent, vec![3, 3]), (ProjectionMethod::Identity, vec![20, 16])] {
        let cfg = FedConfig {
            rounds: 200,
            local_steps: 10,
            step_size: 0.1,
            projection: method,
            ranks,
            gradient: GradientMode::Minibatch { batch_size: 32 },
            seed: 11,
            engine: Engine::DualVariable,
            cost: Default::default(),
        };
        let out = run(&cfg, &obj, obj.initial_point(11), None)?;
        let g: Vec<f64> = out.records.iter().map(|r| r.grad_norm_sq).collect();
        let avg = |n: usize| g[..n].iter().sum::<f64>() / n as f64;
        println!(
            "{:<8} avg ||grad||^2: K=10 {:.3e}  K=200 {:.3e}   final loss {:.4}   uplink/round {}",
            method.short_name(),
            avg(10),
            avg(200),
            out.records.last().map(|r| r.loss).unwrap_or(f64::NAN),
            out.records[0].uplink
        );
    }
    Ok(())
}
