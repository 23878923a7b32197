//! JSON experiment specs, parallel sweeps, CSV output, and the validator
//! and step-size reports behind the command-line tool.

mod run;
mod spec;
mod validate;

use std::path::{Path, PathBuf};

pub use run::{reference_for, run_cells, run_experiment, write_cell_csv, CellResult, ExperimentReport, CELL_COLUMNS, SUMMARY_COLUMNS};
pub use spec::{Cell, DataSpec, DebugFlags, ExperimentSpec, FederationSpec, ObjectiveSpec, Overrides, RankSpec, SweepSpec};
pub use validate::{equivalence_probe, finite_difference_error, validate, Check, ValidationReport, MC_SAMPLES};

use crate::error::{FedError, Result};
use crate::federation::Engine;
use crate::projection::{ProjectionMethod, SubspaceDims};
use crate::theory::{theory_step_size, StepSizeInputs, StepSizeReport};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "FEDSUB_OUT_DIR";

/// Output directory by precedence: explicit flag, then the spec's
/// `output_dir`, then the environment, then `./out`.
pub fn resolve_output_dir(flag: Option<&Path>, spec: &ExperimentSpec, env: Option<&str>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| spec.output_dir.clone())
        .or_else(|| env.filter(|s| !s.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSizeOutcome {
    pub configured: f64,
    /// `None` when the objective has no smoothness bound.
    pub report: Option<StepSizeReport>,
}

impl StepSizeOutcome {
    /// The theory bound when available, the configured step otherwise.
    pub fn step_size(&self) -> f64 {
        self.report.as_ref().map_or(self.configured, |r| r.bound)
    }

    pub fn render(&self) -> String {
        let Some(r) = &self.report else {
            return format!("bound unavailable (no smoothness constant); configured eta = {}\n", self.configured);
        };
        let i = &r.inputs;
        let mut s = format!(
            "theta_r = {:.4}, theta_m = {:.4}, L_f = {:.6e}, n = {}, tau = {}\n",
            i.theta_r, i.theta_m, i.smoothness, i.n_clients, i.local_steps
        );
        for c in &r.conditions {
            s += &format!("  {:<14} eta <= {:.6e}\n", c.name, c.max_step);
        }
        s += &format!("largest admissible eta = {:.6e}\n", r.bound);
        s += &format!(
            "configured eta = {} ({})\n",
            self.configured,
            if r.admits(self.configured) {
                "within the bound"
            } else {
                "exceeds the bound"
            }
        );
        s
    }
}

/// Evaluates the step-size conditions at the spec's constants.
pub fn theory_stepsize(spec: &ExperimentSpec) -> Result<StepSizeOutcome> {
    spec.validate()?;
    let obj = spec.objective.build()?;
    let f = &spec.federation;
    let Some(smoothness) = obj.smoothness_bound() else {
        return Ok(StepSizeOutcome {
            configured: f.step_size,
            report: None,
        });
    };
    let shapes = obj.shapes();
    let dims = if f.engine == Engine::FedAvg || f.projection == ProjectionMethod::Identity {
        SubspaceDims::full(&shapes)
    } else {
        let rank = f
            .rank
            .as_ref()
            .ok_or_else(|| FedError::Config("federation.rank: required for non-identity projections".into()))?;
        SubspaceDims::new(rank.resolve(shapes.len())?)
    };
    let report = theory_step_size(StepSizeInputs {
        theta_r: dims.theta_r(&shapes),
        theta_m: dims.theta_m(&shapes),
        smoothness,
        n_clients: obj.n_clients(),
        local_steps: f.local_steps,
    });
    Ok(StepSizeOutcome {
        configured: f.step_size,
        report: Some(report),
    })
}

/// Writes the spec's dataset as one CSV per client into `dir`.
pub fn export_data(spec: &ExperimentSpec, dir: &Path) -> Result<Vec<PathBuf>> {
    spec.validate()?;
    let obj = spec.objective.build()?;
    let data = obj
        .dataset()
        .ok_or_else(|| FedError::Unsupported("the quadratic objective has no sample data to export".into()))?;
    std::fs::create_dir_all(dir)?;
    data.export_csv(dir)
}
