use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fedsub::experiment::{self, ExperimentSpec, Overrides, OUT_DIR_ENV};
use fedsub::{Engine, FedError, RunStatus};

#[derive(Parser)]
#[command(name = "fedsub", version, about = "Subspace federated optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every sweep cell and write per-cell CSVs plus summary.csv
    Run(Common),
    /// Run the validator suite and write validate.csv
    Validate(Common),
    /// Evaluate the step-size conditions at the spec's constants
    Stepsize(Common),
    /// Write the spec's dataset as one CSV per client
    ExportData(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment spec (JSON)
    spec: PathBuf,
    /// Output directory [default: spec output_dir, then $FEDSUB_OUT_DIR, then ./out]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Override the engine: fedsub, vr, fedavg, fedavg-subspace
    #[arg(long, value_parser = parse_engine)]
    engine: Option<Engine>,
    #[arg(long, env = OUT_DIR_ENV, hide = true)]
    env_out: Option<String>,
}

fn parse_engine(s: &str) -> Result<Engine, String> {
    Engine::parse(s).ok_or_else(|| format!("unknown engine `{s}`"))
}

impl Common {
    fn load(&self) -> fedsub::Result<(ExperimentSpec, PathBuf)> {
        if let Some(n) = self.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| FedError::Config(format!("--threads: {e}")))?;
        }
        let mut spec = ExperimentSpec::from_path(&self.spec)?;
        spec.apply(Overrides {
            seed: self.seed,
            engine: self.engine,
        });
        spec.validate()?;
        let out = experiment::resolve_output_dir(self.out.as_deref(), &spec, self.env_out.as_deref());
        Ok((spec, out))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> fedsub::Result<ExitCode> {
    match cmd {
        Command::Run(c) => {
            let (spec, out) = c.load()?;
            let report = experiment::run_experiment(&spec, &out)?;
            for r in &report.cells {
                let status = match r.status {
                    RunStatus::Completed => "completed".to_string(),
                    RunStatus::Diverged { round, step } => format!("diverged at round {round}, step {step}"),
                };
                let err = r.final_rel_error().map(|e| format!("{e:.3e}")).unwrap_or_else(|| "-".into());
                println!("{:<48} final error {err:>10}  {status}", r.cell.file_name());
            }
            println!("wrote {} cells to {}", report.cells.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate(c) => {
            let (spec, out) = c.load()?;
            let report = experiment::validate(&spec)?;
            print!("{}", report.table());
            std::fs::create_dir_all(&out)?;
            report.write_csv(&out.join("validate.csv"))?;
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                eprintln!("{} check(s) failed", report.failures().len());
                ExitCode::from(1)
            })
        }
        Command::Stepsize(c) => {
            let (spec, _) = c.load()?;
            print!("{}", experiment::theory_stepsize(&spec)?.render());
            Ok(ExitCode::SUCCESS)
        }
        Command::ExportData(c) => {
            let (spec, out) = c.load()?;
            let files = experiment::export_data(&spec, &out.join("data"))?;
            println!("wrote {} client files to {}", files.len(), out.join("data").display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
