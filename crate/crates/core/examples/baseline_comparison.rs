//! Dual-variable correction vs. FedAvg, in the full space and in a
//! coordinate subspace, on the clustered logistic-regression benchmark.
//!
//! ```bash
//! cargo run --release -p fedsub --example baseline_comparison [rounds]
//! ```

use fedsub::federation::run;
use fedsub::objective::{generate_clustered_data, ClusterConfig, LogisticObjective};
use fedsub::{Engine, FedConfig, GradientMode, Objective, ProjectionMethod};

fn main() -> fedsub::Result<()> {
    let rounds = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let data = generate_clustered_data(&ClusterConfig::default())?;
    let obj = Objective::Logistic(LogisticObjective::new(data, 1e-4));
    let reference = obj.solve_reference(1e-12)?;
    println!("reference solved, ||grad f(x*)|| = {:.2e}", reference.grad_norm);

    let variants = [
        ("our P=I", Engine::DualVariable, ProjectionMethod::Identity),
        ("our CD", Engine::DualVariable, ProjectionMethod::CoordinateDescent),
        ("FedAvg-CD", Engine::FedAvgSubspace, ProjectionMethod::CoordinateDescent),
        ("FedAvg", Engine::FedAvg, ProjectionMethod::Identity),
    ];
    for (label, engine, projection) in variants {
        let cfg = FedConfig {
            rounds,
            local_steps: 5,
            step_size: 0.2,
            projection,
            ranks: vec![10],
            gradient: GradientMode::Full,
            seed: 7,
            engine,
            cost: Default::default(),
        };
        let out = run(&cfg, &obj, obj.initial_point(0), Some(&reference))?;
        let last = out.records.last().expect("rounds > 0");
        let checkpoints: Vec<String> = [rounds / 4, rounds / 2, rounds]
            .iter()
            .map(|&k| format!("{:.2e}", out.records[k - 1].rel_error.unwrap_or(f64::NAN)))
            .collect();
        println!(
            "{label:>10}: error at K/4, K/2, K = {}   uplink/round = {}",
            checkpoints.join(", "),
            last.uplink
        );
    }
    Ok(())
}
