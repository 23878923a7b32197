use serde::{Deserialize, Serialize};

use crate::cost::CostParams;
use crate::error::{FedError, Result};
use crate::layered::LayerShape;
use crate::projection::{ProjectionMethod, ProjectionSet, SubspaceDims};
use crate::seed::{derive_seed, STREAM_PROJECTION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Engine {
    /// Subspace local steps with per-client dual variables.
    #[serde(rename = "fedsub", alias = "dual", alias = "dual-variable")]
    DualVariable,
    /// The same method written with an explicit gradient-difference
    /// correction in place of the dual variable.
    #[serde(rename = "vr", alias = "variance-reduction")]
    VarianceReduction,
    /// Full-space local steps, no correction.
    #[serde(rename = "fedavg")]
    FedAvg,
    /// Subspace local steps with the dual variables pinned at zero.
    #[serde(rename = "fedavg-subspace", alias = "fedavg-cd")]
    FedAvgSubspace,
}

impl Engine {
    pub const ALL: [Engine; 4] = [
        Engine::DualVariable,
        Engine::VarianceReduction,
        Engine::FedAvg,
        Engine::FedAvgSubspace,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Engine::DualVariable => "fedsub",
            Engine::VarianceReduction => "vr",
            Engine::FedAvg => "fedavg",
            Engine::FedAvgSubspace => "fedavg-subspace",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fedsub" | "dual" | "dual-variable" => Some(Engine::DualVariable),
            "vr" | "variance-reduction" => Some(Engine::VarianceReduction),
            "fedavg" => Some(Engine::FedAvg),
            "fedavg-subspace" | "fedavg-cd" => Some(Engine::FedAvgSubspace),
            _ => None,
        }
    }

    /// Whether the engine carries a drift correction.
    pub fn corrects_drift(&self) -> bool {
        matches!(self, Engine::DualVariable | Engine::VarianceReduction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum GradientMode {
    Full,
    Minibatch { batch_size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedConfig {
    pub rounds: usize,
    pub local_steps: usize,
    pub step_size: f64,
    pub projection: ProjectionMethod,
    /// Per-layer ranks; ignored when the effective projection is identity.
    pub ranks: Vec<usize>,
    pub gradient: GradientMode,
    pub seed: u64,
    pub engine: Engine,
    #[serde(default)]
    pub cost: CostParams,
}

impl FedConfig {
    /// FedAvg always runs in the full space.
    pub fn effective_projection(&self) -> ProjectionMethod {
        match self.engine {
            Engine::FedAvg => ProjectionMethod::Identity,
            _ => self.projection,
        }
    }

    pub fn dims(&self, shapes: &[LayerShape]) -> SubspaceDims {
        if self.effective_projection() == ProjectionMethod::Identity {
            SubspaceDims::full(shapes)
        } else {
            SubspaceDims::new(self.ranks.clone())
        }
    }

    pub fn validate(&self, shapes: &[LayerShape]) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(FedError::Config(format!("step_size must be positive, got {}", self.step_size)));
        }
        if self.local_steps == 0 {
            return Err(FedError::Config("local_steps must be >= 1".into()));
        }
        if let GradientMode::Minibatch { batch_size } = self.gradient {
            if batch_size == 0 {
                return Err(FedError::Config("batch_size must be >= 1".into()));
            }
        }
        self.dims(shapes).validate(shapes)
    }

    /// The projection set of round `k`, shared by all clients.
    pub fn projection_for_round(&self, shapes: &[LayerShape], k: usize) -> Result<ProjectionSet> {
        let method = self.effective_projection();
        if method == ProjectionMethod::Identity {
            return Ok(ProjectionSet::identity(shapes));
        }
        let seed = derive_seed(self.seed, &[STREAM_PROJECTION, k as u64]);
        ProjectionSet::generate(method, shapes, &self.dims(shapes), seed)
    }
}
