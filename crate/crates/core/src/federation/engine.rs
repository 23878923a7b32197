//! Per-client local rounds and the server/dual updates.

use crate::cost::{measure_uplink, CostModel};
use crate::error::{FedError, Result};
use crate::layered::{LayerShape, LayeredMatrix};
use crate::objective::Objective;
use crate::projection::ProjectionSet;
use crate::seed::{rng_for, STREAM_BATCH};

use super::config::{FedConfig, GradientMode};

#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub client_id: usize,
    /// `Lambda_i`, `r_l x d_l` per layer.
    pub dual: LayeredMatrix,
    /// `B_i` after the most recent local round.
    pub subspace_iterate: LayeredMatrix,
}

impl ClientState {
    pub fn new(client_id: usize, subspace_shapes: &[LayerShape]) -> Self {
        Self {
            client_id,
            dual: LayeredMatrix::zeros(subspace_shapes),
            subspace_iterate: LayeredMatrix::zeros(subspace_shapes),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub global_model: LayeredMatrix,
    pub round: usize,
}

/// Drift correction `c_i^k` of the gradient-difference formulation, held in
/// the current round's subspace. Zero before the first round.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftCorrection {
    pub correction: LayeredMatrix,
}

impl DriftCorrection {
    pub fn zeros(subspace_shapes: &[LayerShape]) -> Self {
        Self {
            correction: LayeredMatrix::zeros(subspace_shapes),
        }
    }

    /// `c_i^{k+1} = (P^{k+1})^T P^k (1/tau) (sum_t gbar^t - sum_t g_i^t)`.
    pub fn advance(
        &mut self,
        avg_grad_sum: &LayeredMatrix,
        own_grad_sum: &LayeredMatrix,
        local_steps: usize,
        p_next: &ProjectionSet,
        p_cur: &ProjectionSet,
        cost: &mut CostModel,
    ) -> Result<()> {
        let diff = avg_grad_sum.sub(own_grad_sum)?.scale(1.0 / local_steps as f64);
        let cols: Vec<usize> = diff.shapes().iter().map(|s| s.cols).collect();
        self.correction = ProjectionSet::transport(p_next, p_cur, &diff)?;
        cost.matmul_flops += p_cur.matmul_flops(&cols) + p_next.matmul_flops(&cols);
        Ok(())
    }
}

fn batch_rng(cfg: &FedConfig, client: usize, round: usize, step: usize) -> rand_chacha::ChaCha8Rng {
    rng_for(
        cfg.seed,
        &[STREAM_BATCH, client as u64, round as u64, step as u64],
    )
}

/// `g_i(B) = (r/m) P^T grad f_i(x + P B)`; the full-space gradient at the
/// lifted point is formed and projected in one chain.
#[allow(clippy::too_many_arguments)]
pub fn subspace_gradient(
    obj: &Objective,
    cfg: &FedConfig,
    client: usize,
    x: &LayeredMatrix,
    p: &ProjectionSet,
    b: &LayeredMatrix,
    round: usize,
    step: usize,
    cost: &mut CostModel,
) -> Result<LayeredMatrix> {
    let shapes = x.shapes();
    let cols: Vec<usize> = shapes.iter().map(|s| s.cols).collect();
    let lifted = x.add(&p.project_up(b)?)?;
    cost.matmul_flops += p.matmul_flops(&cols);
    let grad = match cfg.gradient {
        GradientMode::Full => obj.full_gradient(client, &lifted)?,
        GradientMode::Minibatch { batch_size } => {
            let mut rng = batch_rng(cfg, client, round, step);
            let batch = batch_size.min(obj.samples(client)?);
            obj.minibatch_gradient(client, &lifted, batch, &mut rng)?
        }
    };
    let projected = p.project_down(&grad)?;
    cost.gradient_cost_units += cfg.cost.gradient_cost(b.num_scalars() as u64);
    projected.scale_layerwise(&p.dims().r_over_m(&shapes))
}

/// `tau` steps of `B <- B - eta (g_i(B) + correction)` from `B = 0`.
/// Returns `B^tau` and the per-step `g_i` values.
#[allow(clippy::too_many_arguments)]
fn local_steps(
    obj: &Objective,
    cfg: &FedConfig,
    client: usize,
    x: &LayeredMatrix,
    p: &ProjectionSet,
    correction: &LayeredMatrix,
    round: usize,
    cost: &mut CostModel,
) -> Result<(LayeredMatrix, Vec<LayeredMatrix>)> {
    let mut b = LayeredMatrix::zeros(&correction.shapes());
    let mut grads = Vec::with_capacity(cfg.local_steps);
    for t in 0..cfg.local_steps {
        let g = subspace_gradient(obj, cfg, client, x, p, &b, round, t, cost)?;
        b = b.sub(&g.add(correction)?.scale(cfg.step_size))?;
        if !b.is_finite() {
            return Err(FedError::Divergence { round, step: t });
        }
        grads.push(g);
    }
    Ok((b, grads))
}

/// Local round of the dual-variable engine. Resets `B_i`, runs the local
/// steps with correction `Lambda_i / (eta tau)`, stores and returns `B_i^tau`.
pub fn local_round_dual(
    client: &mut ClientState,
    x: &LayeredMatrix,
    p: &ProjectionSet,
    cfg: &FedConfig,
    obj: &Objective,
    round: usize,
    cost: &mut CostModel,
) -> Result<LayeredMatrix> {
    let correction = client.dual.scale(1.0 / (cfg.step_size * cfg.local_steps as f64));
    let (b, _) = local_steps(obj, cfg, client.client_id, x, p, &correction, round, cost)?;
    cost.uplink_scalars += measure_uplink(&b);
    client.subspace_iterate = b.clone();
    Ok(b)
}

/// `Lambda <- (P_next)^T P_cur (Lambda + B_i - B_avg)`.
pub fn dual_update(
    client: &mut ClientState,
    b_i: &LayeredMatrix,
    b_avg: &LayeredMatrix,
    p_next: &ProjectionSet,
    p_cur: &ProjectionSet,
    cost: &mut CostModel,
) -> Result<()> {
    let gap = client.dual.add(b_i)?.sub(b_avg)?;
    let cols: Vec<usize> = gap.shapes().iter().map(|s| s.cols).collect();
    client.dual = ProjectionSet::transport(p_next, p_cur, &gap)?;
    cost.matmul_flops += p_cur.matmul_flops(&cols) + p_next.matmul_flops(&cols);
    Ok(())
}

/// `x <- x + P B_avg`.
pub fn server_update(server: &mut ServerState, b_avg: &LayeredMatrix, p: &ProjectionSet) -> Result<()> {
    server.global_model = server.global_model.add(&p.project_up(b_avg)?)?;
    server.round += 1;
    Ok(())
}

/// Output of one client's round in the gradient-difference formulation.
#[derive(Debug, Clone, PartialEq)]
pub struct VrLocalOutput {
    pub b: LayeredMatrix,
    pub grads: Vec<LayeredMatrix>,
}

impl VrLocalOutput {
    /// `sum_t g_i^t`, the message this formulation uploads.
    pub fn grad_sum(&self) -> Result<LayeredMatrix> {
        let mut acc = LayeredMatrix::zeros(&self.b.shapes());
        for g in &self.grads {
            acc = acc.add(g)?;
        }
        Ok(acc)
    }
}

/// Local round with the explicit correction `c_i^k`.
#[allow(clippy::too_many_arguments)]
pub fn local_round_vr(
    client_id: usize,
    x: &LayeredMatrix,
    p_cur: &ProjectionSet,
    stored: &DriftCorrection,
    cfg: &FedConfig,
    obj: &Objective,
    round: usize,
    cost: &mut CostModel,
) -> Result<VrLocalOutput> {
    let (b, grads) = local_steps(obj, cfg, client_id, x, p_cur, &stored.correction, round, cost)?;
    let out = VrLocalOutput { b, grads };
    cost.uplink_scalars += measure_uplink(&out.grad_sum()?);
    Ok(out)
}
