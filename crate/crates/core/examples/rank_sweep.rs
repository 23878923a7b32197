//! Final relative error against subspace rank over a few seeds, driven by an
//! in-memory experiment spec.
//!
//! ```bash
//! cargo run --release -p fedsub --example rank_sweep [rounds]
//! ```

use fedsub::experiment::{run_cells, ExperimentSpec};

fn main() -> fedsub::Result<()> {
    let rounds: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let spec = ExperimentSpec::from_json(&format!(
        r#"{{
          "objective": {{ "kind": "logistic" }},
          "federation": {{ "rounds": {rounds}, "local_steps": 5, "step_size": 0.2, "projection": "cd", "rank": 10, "seed": 7 }},
          "sweep": {{ "ranks": [2, 5, 10, 15], "seeds": [7, 8] }}
        }}"#
    ))?;
    for cell in run_cells(&spec)? {
        println!(
            "r = {:>5}  seed {}  final error {:.3e}  uplink/round {}",
            cell.cell.ranks_label(),
            cell.cell.seed,
            cell.final_rel_error().unwrap_or(f64::NAN),
            cell.records[0].uplink
        );
    }
    Ok(())
}
