use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{FedError, Result};
use crate::federation::{run, RoundRecord, RunStatus};
use crate::objective::{Objective, ReferenceSolution};

use super::spec::{Cell, ExperimentSpec};

/// Column order of every per-cell CSV.
pub const CELL_COLUMNS: [&str; 7] = ["k", "rel_error", "grad_norm_sq", "uplink", "matmul", "gradcost", "wall_ms"];

pub const SUMMARY_COLUMNS: [&str; 20] = [
    "cell",
    "file",
    "engine",
    "projection",
    "ranks",
    "seed",
    "repetition",
    "run_seed",
    "status",
    "diverged_round",
    "rounds_run",
    "final_rel_error",
    "best_rel_error",
    "final_grad_norm_sq",
    "mean_grad_norm_sq",
    "final_loss",
    "uplink_per_round",
    "matmul_per_round",
    "max_dual_sum",
    "wall_ms_total",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub records: Vec<RoundRecord>,
    pub status: RunStatus,
}

impl CellResult {
    pub fn final_record(&self) -> Option<&RoundRecord> {
        self.records.last()
    }

    pub fn final_rel_error(&self) -> Option<f64> {
        self.final_record().and_then(|r| r.rel_error)
    }

    pub fn best_rel_error(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.rel_error).reduce(f64::min)
    }

    /// `(1/K) sum_k ||grad f(x^k)||^2` over the recorded rounds.
    pub fn mean_grad_norm_sq(&self) -> Option<f64> {
        if self.records.is_empty() {
            return None;
        }
        Some(self.records.iter().map(|r| r.grad_norm_sq).sum::<f64>() / self.records.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub out_dir: PathBuf,
    pub cells: Vec<CellResult>,
}

impl ExperimentReport {
    pub fn find(&self, pred: impl Fn(&Cell) -> bool) -> Vec<&CellResult> {
        self.cells.iter().filter(|c| pred(&c.cell)).collect()
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

fn run_cell(spec: &ExperimentSpec, obj: &Objective, reference: Option<&ReferenceSolution>, cell: &Cell) -> Result<CellResult> {
    let cfg = spec.fed_config(cell);
    let out = run(&cfg, obj, spec.initial_point(obj, cell), reference)?;
    let records = if spec.record_wall_time {
        out.records
    } else {
        out.records.iter().map(RoundRecord::without_timing).collect()
    };
    Ok(CellResult {
        cell: cell.clone(),
        records,
        status: out.status,
    })
}

/// Reference minimizer when the objective has one.
pub fn reference_for(obj: &Objective) -> Result<Option<ReferenceSolution>> {
    match obj {
        Objective::Mlp(_) => Ok(None),
        _ => obj.solve_reference(1e-12).map(Some),
    }
}

/// Runs every sweep cell without writing anything.
pub fn run_cells(spec: &ExperimentSpec) -> Result<Vec<CellResult>> {
    spec.validate()?;
    let obj = spec.objective.build()?;
    let reference = reference_for(&obj)?;
    let cells = spec.cells()?;
    cells
        .par_iter()
        .map(|cell| run_cell(spec, &obj, reference.as_ref(), cell))
        .collect()
}

/// Runs the sweep and writes one CSV per cell plus `summary.csv` and the
/// resolved `spec.json` into `out_dir`.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path) -> Result<ExperimentReport> {
    let results = run_cells(spec)?;
    fs::create_dir_all(out_dir).map_err(|e| FedError::Io(format!("{}: {e}", out_dir.display())))?;
    fs::write(out_dir.join("spec.json"), spec.to_json() + "\n")?;
    for r in &results {
        write_cell_csv(&out_dir.join(r.cell.file_name()), &r.records)?;
    }
    write_summary(&out_dir.join("summary.csv"), &results)?;
    Ok(ExperimentReport {
        out_dir: out_dir.to_path_buf(),
        cells: results,
    })
}

pub fn write_cell_csv(path: &Path, records: &[RoundRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CELL_COLUMNS)?;
    for r in records {
        w.write_record([
            r.k.to_string(),
            fmt_opt(r.rel_error),
            fmt_f(r.grad_norm_sq),
            r.uplink.to_string(),
            r.matmul.to_string(),
            r.gradcost.to_string(),
            fmt_f(r.wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary(path: &Path, results: &[CellResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_COLUMNS)?;
    for r in results {
        let c = &r.cell;
        let (status, diverged_round) = match r.status {
            RunStatus::Completed => ("completed", String::new()),
            RunStatus::Diverged { round, .. } => ("diverged", round.to_string()),
        };
        let last = r.final_record();
        w.write_record([
            c.index.to_string(),
            c.file_name(),
            c.engine.name().to_string(),
            c.projection.short_name().to_string(),
            c.ranks_label(),
            c.seed.to_string(),
            c.repetition.to_string(),
            c.run_seed.to_string(),
            status.to_string(),
            diverged_round,
            r.records.len().to_string(),
            fmt_opt(r.final_rel_error()),
            fmt_opt(r.best_rel_error()),
            fmt_opt(last.map(|l| l.grad_norm_sq)),
            fmt_opt(r.mean_grad_norm_sq()),
            fmt_opt(last.map(|l| l.loss)),
            last.map(|l| l.uplink.to_string()).unwrap_or_default(),
            last.map(|l| l.matmul.to_string()).unwrap_or_default(),
            fmt_opt(r.records.iter().map(|l| l.dual_sum_max).reduce(f64::max)),
            fmt_f(r.records.iter().map(|l| l.wall_ms).sum()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
