//! Federated engines: the dual-variable method, its gradient-difference
//! rewrite, and the uncorrected baselines.

mod config;
mod engine;
mod runner;

pub use config::{Engine, FedConfig, GradientMode};
pub use engine::{
    dual_update, local_round_dual, local_round_vr, server_update, subspace_gradient, ClientState, DriftCorrection,
    ServerState, VrLocalOutput,
};
pub use runner::{run, run_fedavg, RoundOutcome, RoundRecord, RunOutput, RunStatus, Simulation};
