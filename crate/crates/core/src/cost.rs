//! Per-client, per-round cost counters and the analytic model they must
//! agree with.
//!
//! Gradient computation and memory are expressed through two affine model
//! functions `C_g(s) = alpha_compute * s` and `M_g(s) = alpha_memory * s`,
//! where `s` is the number of scalars in the gradient being formed. These are
//! model parameters, not measurements.

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::federation::Engine;
use crate::layered::{LayerShape, LayeredMatrix};
use crate::projection::{ProjectionMethod, SubspaceDims};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostParams {
    pub alpha_compute: u64,
    pub alpha_memory: u64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            alpha_compute: 2,
            alpha_memory: 3,
        }
    }
}

impl CostParams {
    pub fn gradient_cost(&self, scalars: u64) -> u64 {
        self.alpha_compute * scalars
    }

    pub fn gradient_memory(&self, scalars: u64) -> u64 {
        self.alpha_memory * scalars
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub uplink_scalars: u64,
    /// Server broadcasts; tracked apart from uplink.
    pub downlink_scalars: u64,
    pub matmul_flops: u64,
    pub gradient_cost_units: u64,
    /// Peak scalars held by one client during a round.
    pub memory_scalars: u64,
}

impl AddAssign for CostModel {
    fn add_assign(&mut self, rhs: Self) {
        self.uplink_scalars += rhs.uplink_scalars;
        self.downlink_scalars += rhs.downlink_scalars;
        self.matmul_flops += rhs.matmul_flops;
        self.gradient_cost_units += rhs.gradient_cost_units;
        // peak, not a running total
        self.memory_scalars = self.memory_scalars.max(rhs.memory_scalars);
    }
}

/// Scalar count of a message.
pub fn measure_uplink(payload: &LayeredMatrix) -> u64 {
    payload.num_scalars() as u64
}

/// Which column of the cost table an engine configuration falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostColumn {
    /// Dual-variable (or equivalent) engine in a proper subspace.
    Subspace,
    /// Dual-variable engine with identity projections.
    FullSpace,
    FedAvg,
    /// Dual variables pinned to zero, projection active.
    FedAvgSubspace,
}

impl CostColumn {
    pub fn of(engine: Engine, method: ProjectionMethod) -> Self {
        let identity = method == ProjectionMethod::Identity;
        match engine {
            Engine::DualVariable | Engine::VarianceReduction if identity => CostColumn::FullSpace,
            Engine::DualVariable | Engine::VarianceReduction => CostColumn::Subspace,
            Engine::FedAvg => CostColumn::FedAvg,
            Engine::FedAvgSubspace if identity => CostColumn::FedAvg,
            Engine::FedAvgSubspace => CostColumn::FedAvgSubspace,
        }
    }
}

/// Analytic per-client cost of one round.
pub fn tally_round(
    engine: Engine,
    method: ProjectionMethod,
    shapes: &[LayerShape],
    dims: &SubspaceDims,
    local_steps: usize,
    params: &CostParams,
) -> CostModel {
    let tau = local_steps as u64;
    let mut md = 0u64;
    let mut rd = 0u64;
    let mut mrd = 0u64;
    let mut rm = 0u64;
    for (s, &r) in shapes.iter().zip(dims.ranks()) {
        let (m, d, r) = (s.rows as u64, s.cols as u64, r as u64);
        md += m * d;
        rd += r * d;
        mrd += m * r * d;
        rm += r * m;
    }
    let cg = |s| params.gradient_cost(s);
    let mg = |s| params.gradient_memory(s);
    match CostColumn::of(engine, method) {
        CostColumn::Subspace => CostModel {
            uplink_scalars: rd,
            downlink_scalars: rd + md,
            matmul_flops: tau * mrd + 2 * mrd,
            gradient_cost_units: tau * cg(rd),
            memory_scalars: 3 * rd + mg(rd) + 2 * rm + md,
        },
        CostColumn::FullSpace => CostModel {
            uplink_scalars: md,
            downlink_scalars: md + md,
            matmul_flops: 0,
            gradient_cost_units: tau * cg(md),
            memory_scalars: 3 * md + mg(md),
        },
        CostColumn::FedAvg => CostModel {
            uplink_scalars: md,
            downlink_scalars: md,
            matmul_flops: 0,
            gradient_cost_units: tau * cg(md),
            memory_scalars: md + mg(md),
        },
        // B, P, the subspace gradient and x; no dual variable, no next projection
        CostColumn::FedAvgSubspace => CostModel {
            uplink_scalars: rd,
            downlink_scalars: md,
            matmul_flops: tau * mrd,
            gradient_cost_units: tau * cg(rd),
            memory_scalars: rd + mg(rd) + rm + md,
        },
    }
}
