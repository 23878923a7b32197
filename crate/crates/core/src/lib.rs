//! Subspace federated optimization with low-dimensional dual variables.
//!
//! Clients take local steps inside a random `r`-dimensional subspace of each
//! layer and upload only the `r x d` subspace iterate. A per-client dual
//! variable, also living in the subspace, corrects client drift under
//! heterogeneous data. With identity projections the method reduces to a
//! full-space primal-dual scheme; with the duals pinned at zero it reduces to
//! FedAvg (in the subspace or the full space).
//!
//! Modules:
//! - [`layered`]: per-layer matrix collections and their arithmetic
//! - [`projection`]: projection constructions and constraint validators
//! - [`objective`]: losses, gradient oracles, synthetic data, reference solutions
//! - [`federation`]: engines and the round runner
//! - [`cost`]: communication / computation / memory counters
//! - [`theory`]: step-size conditions of the convergence analysis
//! - [`experiment`]: JSON experiment specs, sweeps and CSV output

pub mod cost;
pub mod error;
pub mod experiment;
pub mod federation;
pub mod layered;
pub mod objective;
pub mod projection;
pub mod seed;
pub mod theory;

pub use error::{FedError, Result};
pub use federation::{Engine, FedConfig, GradientMode, RoundRecord, RunOutput, RunStatus, Simulation};
pub use layered::{LayerScalars, LayerShape, LayeredMatrix};
pub use objective::{Objective, ReferenceSolution};
pub use projection::{ProjectionMethod, ProjectionSet, SubspaceDims};
