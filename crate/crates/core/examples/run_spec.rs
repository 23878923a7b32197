//! Run a JSON experiment spec and write per-cell CSVs plus a summary, the
//! same way the `fedsub run` command does.
//!
//! ```bash
//! cargo run --release -p fedsub --example run_spec -- specs/quadratic.json /tmp/quad
//! ```

use std::path::PathBuf;

use fedsub::experiment::{run_experiment, validate, ExperimentSpec};

fn main() -> fedsub::Result<()> {
    let mut args = std::env::args().skip(1);
    let spec_path = PathBuf::from(args.next().unwrap_or_else(|| "specs/quadratic.json".into()));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/example".into()));
    let spec = ExperimentSpec::from_path(&spec_path)?;

    let checks = validate(&spec)?;
    println!("{}", checks.table());

    let report = run_experiment(&spec, &out)?;
    for c in &report.cells {
        println!("{:<44} {:?}  final error {:?}", c.cell.file_name(), c.status, c.final_rel_error());
    }
    println!("wrote {}", report.out_dir.join("summary.csv").display());
    Ok(())
}
