use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cost::CostParams;
use crate::error::{FedError, Result};
use crate::federation::{Engine, FedConfig, GradientMode};
use crate::layered::{LayerShape, LayeredMatrix};
use crate::objective::{
    generate_clustered_data, ClusterConfig, LogisticObjective, MlpObjective, Objective, QuadraticObjective,
};
use crate::projection::{ProjectionMethod, SubspaceDims};
use crate::seed::{derive_seed, STREAM_CELL};

/// Parameters of the clustered synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    pub n_clients: usize,
    pub samples_total: usize,
    pub feature_dim: usize,
    pub heterogeneity_noise: f64,
    pub seed: u64,
}

impl Default for DataSpec {
    fn default() -> Self {
        let c = ClusterConfig::default();
        Self {
            n_clients: c.n_clients,
            samples_total: c.samples_total,
            feature_dim: c.feature_dim,
            heterogeneity_noise: c.heterogeneity_noise,
            seed: c.seed,
        }
    }
}

impl DataSpec {
    pub fn cluster_config(&self) -> ClusterConfig {
        ClusterConfig {
            n_clients: self.n_clients,
            samples_total: self.samples_total,
            feature_dim: self.feature_dim,
            heterogeneity_noise: self.heterogeneity_noise,
            seed: self.seed,
        }
    }
}

fn default_lambda() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    Logistic {
        #[serde(default)]
        data: DataSpec,
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    /// Random heterogeneous quadratic; `layers` lists `[rows, cols]`.
    Quadratic {
        n_clients: usize,
        layers: Vec<[usize; 2]>,
        eig_lo: f64,
        eig_hi: f64,
        #[serde(default)]
        seed: u64,
    },
    Mlp {
        #[serde(default)]
        data: DataSpec,
        hidden: usize,
    },
}

impl ObjectiveSpec {
    pub fn build(&self) -> Result<Objective> {
        Ok(match self {
            ObjectiveSpec::Logistic { data, lambda } => {
                Objective::Logistic(LogisticObjective::new(generate_clustered_data(&data.cluster_config())?, *lambda))
            }
            ObjectiveSpec::Quadratic {
                n_clients,
                layers,
                eig_lo,
                eig_hi,
                seed,
            } => {
                let shapes = layers
                    .iter()
                    .map(|&[r, c]| LayerShape::new(r, c))
                    .collect::<Result<Vec<_>>>()?;
                Objective::Quadratic(QuadraticObjective::random_heterogeneous(
                    *n_clients, &shapes, *eig_lo, *eig_hi, *seed,
                )?)
            }
            ObjectiveSpec::Mlp { data, hidden } => {
                Objective::Mlp(MlpObjective::new(generate_clustered_data(&data.cluster_config())?, *hidden))
            }
        })
    }

    /// Layer shapes, known without generating any data.
    pub fn shapes(&self) -> Result<Vec<LayerShape>> {
        match self {
            ObjectiveSpec::Logistic { data, .. } => Ok(vec![LayerShape::new(data.feature_dim, 1)?]),
            ObjectiveSpec::Quadratic { layers, .. } => layers.iter().map(|&[r, c]| LayerShape::new(r, c)).collect(),
            ObjectiveSpec::Mlp { data, hidden } => Ok(vec![
                LayerShape::new(data.feature_dim, *hidden)?,
                LayerShape::new(*hidden, 1)?,
            ]),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(FedError::Config(format!("objective.{field}: {msg}")));
        match self {
            ObjectiveSpec::Logistic { data, lambda } => {
                if lambda.is_nan() || *lambda <= 0.0 {
                    return bad("lambda", "must be positive for a unique minimizer");
                }
                data.validate()
            }
            ObjectiveSpec::Quadratic {
                n_clients,
                layers,
                eig_lo,
                eig_hi,
                ..
            } => {
                if *n_clients == 0 {
                    return bad("n_clients", "must be >= 1");
                }
                if layers.is_empty() || layers.iter().any(|&[r, c]| r == 0 || c == 0) {
                    return bad("layers", "needs at least one layer with positive dimensions");
                }
                if !(*eig_lo > 0.0 && eig_lo <= eig_hi) {
                    return bad("eig_lo", "need 0 < eig_lo <= eig_hi");
                }
                Ok(())
            }
            ObjectiveSpec::Mlp { data, hidden } => {
                if *hidden == 0 {
                    return bad("hidden", "must be >= 1");
                }
                data.validate()
            }
        }
    }
}

impl DataSpec {
    fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(FedError::Config(format!("objective.data.{field}: {msg}")));
        if self.n_clients == 0 {
            return bad("n_clients", "must be >= 1");
        }
        if self.samples_total < self.n_clients {
            return bad("samples_total", "every client needs at least one sample");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim", "must be >= 1");
        }
        if self.heterogeneity_noise.is_nan() || self.heterogeneity_noise < 0.0 {
            return bad("heterogeneity_noise", "must be >= 0");
        }
        Ok(())
    }
}

/// One rank for every layer, or one per layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RankSpec {
    Uniform(usize),
    PerLayer(Vec<usize>),
}

impl RankSpec {
    pub fn resolve(&self, n_layers: usize) -> Result<Vec<usize>> {
        match self {
            RankSpec::Uniform(r) => Ok(vec![*r; n_layers]),
            RankSpec::PerLayer(rs) if rs.len() == n_layers => Ok(rs.clone()),
            RankSpec::PerLayer(rs) => Err(FedError::Config(format!(
                "rank: {} entries for {n_layers} layers",
                rs.len()
            ))),
        }
    }
}

fn default_engine() -> Engine {
    Engine::DualVariable
}

fn default_gradient() -> GradientMode {
    GradientMode::Full
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationSpec {
    pub rounds: usize,
    pub local_steps: usize,
    pub step_size: f64,
    pub projection: ProjectionMethod,
    /// Required unless every cell uses identity projections.
    #[serde(default)]
    pub rank: Option<RankSpec>,
    #[serde(default = "default_gradient")]
    pub gradient: GradientMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_engine")]
    pub engine: Engine,
    #[serde(default)]
    pub cost: CostParams,
}

/// Axes of the sweep. A missing axis holds the base value from
/// `federation`; a present axis must be non-empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engines: Option<Vec<Engine>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projections: Option<Vec<ProjectionMethod>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranks: Option<Vec<RankSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DebugFlags {
    /// Generate coordinate projections without the `sqrt(m/r)` factor in
    /// the validator.
    pub corrupt_cd_scaling: bool,
}

fn default_name() -> String {
    "experiment".into()
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub objective: ObjectiveSpec,
    pub federation: FederationSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Wall-clock columns are zero when off, which keeps outputs
    /// byte-identical across runs.
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default)]
    pub debug: DebugFlags,
}

/// Command-line overrides applied on top of a parsed spec.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub engine: Option<Engine>,
}

/// One point of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub engine: Engine,
    pub projection: ProjectionMethod,
    pub ranks: Vec<usize>,
    pub seed: u64,
    pub repetition: usize,
    /// Seed the run actually uses; shared by cells that differ only in
    /// engine, projection or rank.
    pub run_seed: u64,
}

impl Cell {
    pub fn ranks_label(&self) -> String {
        self.ranks.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("-")
    }

    pub fn file_name(&self) -> String {
        format!(
            "cell{:03}_{}_{}_r{}_s{}_rep{}.csv",
            self.index,
            self.engine.name(),
            self.projection.short_name(),
            self.ranks_label(),
            self.seed,
            self.repetition
        )
    }
}

impl ExperimentSpec {
    /// Parses JSON; syntax and type errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| {
            FedError::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FedError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            FedError::Config(msg) => FedError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(seed) = o.seed {
            self.federation.seed = seed;
            if self.sweep.seeds.is_some() {
                self.sweep.seeds = Some(vec![seed]);
            }
        }
        if let Some(engine) = o.engine {
            self.federation.engine = engine;
            if self.sweep.engines.is_some() {
                self.sweep.engines = Some(vec![engine]);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        let f = &self.federation;
        if f.rounds == 0 {
            return Err(FedError::Config("federation.rounds: must be >= 1".into()));
        }
        if f.local_steps == 0 {
            return Err(FedError::Config("federation.local_steps: must be >= 1".into()));
        }
        if !(f.step_size > 0.0 && f.step_size.is_finite()) {
            return Err(FedError::Config("federation.step_size: must be positive and finite".into()));
        }
        if let GradientMode::Minibatch { batch_size } = f.gradient {
            if batch_size == 0 {
                return Err(FedError::Config("federation.gradient.batch_size: must be >= 1".into()));
            }
        }
        if self.repetitions == 0 {
            return Err(FedError::Config("repetitions: must be >= 1".into()));
        }
        let s = &self.sweep;
        for (name, empty) in [
            ("engines", s.engines.as_ref().is_some_and(|v| v.is_empty())),
            ("projections", s.projections.as_ref().is_some_and(|v| v.is_empty())),
            ("ranks", s.ranks.as_ref().is_some_and(|v| v.is_empty())),
            ("seeds", s.seeds.as_ref().is_some_and(|v| v.is_empty())),
        ] {
            if empty {
                return Err(FedError::Config(format!("sweep.{name}: axis must not be empty")));
            }
        }
        let shapes = self.objective.shapes()?;
        for rank in self.rank_axis() {
            match rank {
                Some(r) => {
                    let ranks = r.resolve(shapes.len())?;
                    SubspaceDims::new(ranks)
                        .validate(&shapes)
                        .map_err(|e| FedError::Config(format!("rank: {e}")))?;
                }
                None => {
                    if self.projection_axis().iter().any(|p| *p != ProjectionMethod::Identity) {
                        return Err(FedError::Config(
                            "federation.rank: required for non-identity projections".into(),
                        ));
                    }
                }
            }
        }
        if let (ObjectiveSpec::Quadratic { .. }, GradientMode::Minibatch { batch_size }) = (&self.objective, f.gradient)
        {
            if batch_size != 1 {
                return Err(FedError::Config(
                    "federation.gradient.batch_size: a quadratic client holds a single sample".into(),
                ));
            }
        }
        Ok(())
    }

    fn engine_axis(&self) -> Vec<Engine> {
        self.sweep.engines.clone().unwrap_or_else(|| vec![self.federation.engine])
    }

    fn projection_axis(&self) -> Vec<ProjectionMethod> {
        self.sweep
            .projections
            .clone()
            .unwrap_or_else(|| vec![self.federation.projection])
    }

    fn rank_axis(&self) -> Vec<Option<RankSpec>> {
        match &self.sweep.ranks {
            Some(rs) => rs.iter().cloned().map(Some).collect(),
            None => vec![self.federation.rank.clone()],
        }
    }

    fn seed_axis(&self) -> Vec<u64> {
        self.sweep.seeds.clone().unwrap_or_else(|| vec![self.federation.seed])
    }

    /// Every projection method the spec can use.
    pub fn projection_methods(&self) -> Vec<ProjectionMethod> {
        self.projection_axis()
    }

    /// Every resolved rank vector the spec can use.
    pub fn rank_settings(&self) -> Result<Vec<Vec<usize>>> {
        let n = self.objective.shapes()?.len();
        self.rank_axis().into_iter().flatten().map(|r| r.resolve(n)).collect()
    }

    /// Product of the axes, in engine-major order, times repetitions.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let shapes = self.objective.shapes()?;
        let mut out = Vec::new();
        for engine in self.engine_axis() {
            for projection in self.projection_axis() {
                for rank in self.rank_axis() {
                    let full = projection == ProjectionMethod::Identity || engine == Engine::FedAvg;
                    let ranks = match &rank {
                        Some(r) if !full => r.resolve(shapes.len())?,
                        _ => shapes.iter().map(|s| s.rows).collect(),
                    };
                    for seed in self.seed_axis() {
                        for repetition in 0..self.repetitions {
                            out.push(Cell {
                                index: out.len(),
                                engine,
                                projection,
                                ranks: ranks.clone(),
                                seed,
                                repetition,
                                run_seed: derive_seed(seed, &[STREAM_CELL, repetition as u64]),
                            });
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn fed_config(&self, cell: &Cell) -> FedConfig {
        let f = &self.federation;
        FedConfig {
            rounds: f.rounds,
            local_steps: f.local_steps,
            step_size: f.step_size,
            projection: cell.projection,
            ranks: cell.ranks.clone(),
            gradient: f.gradient,
            seed: cell.run_seed,
            engine: cell.engine,
            cost: f.cost,
        }
    }

    /// Starting point of a cell: zeros for the convex objectives, a draw
    /// seeded by the cell for the MLP.
    pub fn initial_point(&self, obj: &Objective, cell: &Cell) -> LayeredMatrix {
        obj.initial_point(cell.run_seed)
    }
}
