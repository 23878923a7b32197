//! Largest step size admitted by the convergence analysis, as a function of
//! rank, for the default logistic benchmark.

use fedsub::objective::{generate_clustered_data, ClusterConfig, LogisticObjective};
use fedsub::theory::{theory_step_size, StepSizeInputs};
use fedsub::{Objective, SubspaceDims};

fn main() -> fedsub::Result<()> {
    let data = generate_clustered_data(&ClusterConfig::default())?;
    let obj = Objective::Logistic(LogisticObjective::new(data, 1e-4));
    let shapes = obj.shapes();
    let smoothness = obj.smoothness_bound().expect("logistic loss is smooth");
    println!("L_f <= {smoothness:.4}");
    for r in [1, 2, 5, 10, 20] {
        let dims = SubspaceDims::uniform_clamped(r, &shapes);
        let report = theory_step_size(StepSizeInputs {
            theta_r: dims.theta_r(&shapes),
            theta_m: dims.theta_m(&shapes),
            smoothness,
            n_clients: obj.n_clients(),
            local_steps: 5,
        });
        let binding = report
            .conditions
            .iter()
            .min_by(|a, b| a.max_step.total_cmp(&b.max_step))
            .map(|c| c.name)
            .unwrap_or("-");
        println!("r = {r:>2}: eta <= {:.3e} ({binding})", report.bound);
    }
    Ok(())
}
