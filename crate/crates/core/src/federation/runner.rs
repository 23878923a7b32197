//! Round orchestration: projections, client rounds, server aggregation and
//! per-round metrics.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{measure_uplink, tally_round, CostModel};
use crate::error::{FedError, Result};
use crate::layered::{LayerShape, LayeredMatrix};
use crate::objective::{Objective, ReferenceSolution};
use crate::projection::ProjectionSet;

use super::config::{Engine, FedConfig};
use super::engine::{
    dual_update, local_round_dual, local_round_vr, server_update, ClientState, DriftCorrection, ServerState,
};

/// Metrics after one round, describing `x^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub k: usize,
    pub rel_error: Option<f64>,
    pub grad_norm_sq: f64,
    pub loss: f64,
    /// Per-client counters for the round that produced `x^k`.
    pub uplink: u64,
    pub downlink: u64,
    pub matmul: u64,
    pub gradcost: u64,
    pub memory: u64,
    pub wall_ms: f64,
    /// `|| sum_i Lambda_i ||_inf` after the round; zero for engines without duals.
    pub dual_sum_max: f64,
}

impl RoundRecord {
    pub fn without_timing(&self) -> Self {
        Self {
            wall_ms: 0.0,
            ..self.clone()
        }
    }
}

/// What one round produced, for callers stepping a [`Simulation`] by hand.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub round: usize,
    /// Counters of client 0; every client does identical work.
    pub cost: CostModel,
    pub client_costs: Vec<CostModel>,
    /// `B_i^{k,tau}` per client.
    pub payloads: Vec<LayeredMatrix>,
    /// Per-client, per-step `g_i` (gradient-difference engine only).
    pub local_grads: Option<Vec<Vec<LayeredMatrix>>>,
    pub projection: ProjectionSet,
    pub next_projection: ProjectionSet,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    Diverged { round: usize, step: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<RoundRecord>,
    pub final_model: LayeredMatrix,
    pub status: RunStatus,
}

/// Stateful driver for one federated run.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    cfg: FedConfig,
    obj: &'a Objective,
    shapes: Vec<LayerShape>,
    server: ServerState,
    clients: Vec<ClientState>,
    corrections: Vec<DriftCorrection>,
    current: ProjectionSet,
    force_zero_dual: bool,
}

impl<'a> Simulation<'a> {
    pub fn new(cfg: FedConfig, obj: &'a Objective, x0: LayeredMatrix) -> Result<Self> {
        let shapes = obj.shapes();
        if x0.shapes() != shapes {
            return Err(FedError::Config("initial point does not match the objective's layer shapes".into()));
        }
        cfg.validate(&shapes)?;
        let sub_shapes = cfg.dims(&shapes).subspace_shapes(&shapes);
        let clients = (0..obj.n_clients()).map(|i| ClientState::new(i, &sub_shapes)).collect();
        let corrections = (0..obj.n_clients()).map(|_| DriftCorrection::zeros(&sub_shapes)).collect();
        let current = cfg.projection_for_round(&shapes, 0)?;
        Ok(Self {
            cfg,
            obj,
            shapes,
            server: ServerState {
                global_model: x0,
                round: 0,
            },
            clients,
            corrections,
            current,
            force_zero_dual: false,
        })
    }

    /// Zero every dual variable after each round. Used to cross-check the
    /// uncorrected subspace baseline against the dual engine.
    pub fn with_zeroed_duals(mut self) -> Self {
        self.force_zero_dual = true;
        self
    }

    pub fn config(&self) -> &FedConfig {
        &self.cfg
    }

    pub fn model(&self) -> &LayeredMatrix {
        &self.server.global_model
    }

    pub fn round(&self) -> usize {
        self.server.round
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn corrections(&self) -> &[DriftCorrection] {
        &self.corrections
    }

    /// `Sum_i Lambda_i`.
    pub fn dual_sum(&self) -> Result<LayeredMatrix> {
        let mut acc = LayeredMatrix::zeros(&self.clients[0].dual.shapes());
        for c in &self.clients {
            acc = acc.add(&c.dual)?;
        }
        Ok(acc)
    }

    pub fn step(&mut self) -> Result<RoundOutcome> {
        let k = self.server.round;
        let p = self.current.clone();
        let p_next = self.cfg.projection_for_round(&self.shapes, k + 1)?;
        let x = self.server.global_model.clone();
        let cfg = &self.cfg;
        let obj = self.obj;
        let tally = tally_round(
            cfg.engine,
            cfg.effective_projection(),
            &self.shapes,
            &cfg.dims(&self.shapes),
            cfg.local_steps,
            &cfg.cost,
        );

        let (payloads, mut costs, local_grads) = match cfg.engine {
            Engine::VarianceReduction => {
                let outs = self
                    .corrections
                    .par_iter()
                    .enumerate()
                    .map(|(i, corr)| {
                        let mut cost = CostModel::default();
                        local_round_vr(i, &x, &p, corr, cfg, obj, k, &mut cost).map(|o| (o, cost))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let sums = outs.iter().map(|(o, _)| o.grad_sum()).collect::<Result<Vec<_>>>()?;
                let avg_sum = LayeredMatrix::average(&sums)?;
                let mut costs: Vec<CostModel> = outs.iter().map(|(_, c)| *c).collect();
                for ((corr, own), cost) in self.corrections.iter_mut().zip(&sums).zip(costs.iter_mut()) {
                    corr.advance(&avg_sum, own, cfg.local_steps, &p_next, &p, cost)?;
                    cost.downlink_scalars += measure_uplink(&avg_sum);
                }
                // x <- x - eta P sum_t gbar^t
                let step = p.project_up(&avg_sum)?.scale(cfg.step_size);
                self.server.global_model = self.server.global_model.sub(&step)?;
                self.server.round += 1;
                let (payloads, grads): (Vec<_>, Vec<_>) = outs.into_iter().map(|(o, _)| (o.b, o.grads)).unzip();
                (payloads, costs, Some(grads))
            }
            _ => {
                let outs = self
                    .clients
                    .par_iter_mut()
                    .map(|c| {
                        let mut cost = CostModel::default();
                        local_round_dual(c, &x, &p, cfg, obj, k, &mut cost).map(|b| (b, cost))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let (payloads, mut costs): (Vec<_>, Vec<_>) = outs.into_iter().unzip();
                let b_avg = LayeredMatrix::average(&payloads)?;
                if cfg.engine == Engine::DualVariable {
                    for ((c, b_i), cost) in self.clients.iter_mut().zip(&payloads).zip(costs.iter_mut()) {
                        dual_update(c, b_i, &b_avg, &p_next, &p, cost)?;
                        cost.downlink_scalars += measure_uplink(&b_avg);
                    }
                    if self.force_zero_dual {
                        for c in &mut self.clients {
                            c.dual = c.dual.scale(0.0);
                        }
                    }
                }
                server_update(&mut self.server, &b_avg, &p)?;
                (payloads, costs, None)
            }
        };
        if !self.server.global_model.is_finite() {
            return Err(FedError::Divergence {
                round: k,
                step: cfg.local_steps,
            });
        }
        let x_scalars = measure_uplink(&self.server.global_model);
        for c in &mut costs {
            c.downlink_scalars += x_scalars;
            c.memory_scalars = tally.memory_scalars;
        }
        self.current = p_next.clone();
        Ok(RoundOutcome {
            round: k,
            cost: costs[0],
            client_costs: costs,
            payloads,
            local_grads,
            projection: p,
            next_projection: p_next,
        })
    }
}

/// Runs `cfg.rounds` rounds and records metrics after each. Divergence ends
/// the run early and is reported through [`RunStatus`].
pub fn run(
    cfg: &FedConfig,
    obj: &Objective,
    x0: LayeredMatrix,
    reference: Option<&ReferenceSolution>,
) -> Result<RunOutput> {
    let mut sim = Simulation::new(cfg.clone(), obj, x0)?;
    let mut records = Vec::with_capacity(cfg.rounds);
    let mut status = RunStatus::Completed;
    for _ in 0..cfg.rounds {
        let start = Instant::now();
        let outcome = match sim.step() {
            Ok(o) => o,
            Err(FedError::Divergence { round, step }) => {
                status = RunStatus::Diverged { round, step };
                break;
            }
            Err(e) => return Err(e),
        };
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let x = sim.model();
        let grad_norm_sq = obj.global_gradient(x)?.norm_sq();
        let loss = obj.global_loss(x)?;
        let rel_error = reference.map(|r| r.relative_error(x)).transpose()?;
        let dual_sum_max = if cfg.engine == Engine::DualVariable {
            sim.dual_sum()?.max_abs()
        } else {
            0.0
        };
        records.push(RoundRecord {
            k: outcome.round + 1,
            rel_error,
            grad_norm_sq,
            loss,
            uplink: outcome.cost.uplink_scalars,
            downlink: outcome.cost.downlink_scalars,
            matmul: outcome.cost.matmul_flops,
            gradcost: outcome.cost.gradient_cost_units,
            memory: outcome.cost.memory_scalars,
            wall_ms,
            dual_sum_max,
        });
    }
    Ok(RunOutput {
        records,
        final_model: sim.model().clone(),
        status,
    })
}

/// Model sequence `x^1, ..., x^K` of an uncorrected engine.
pub fn run_fedavg(cfg: &FedConfig, obj: &Objective, x0: LayeredMatrix) -> Result<Vec<LayeredMatrix>> {
    if cfg.engine.corrects_drift() {
        return Err(FedError::Config(format!(
            "run_fedavg needs fedavg or fedavg-subspace, got {}",
            cfg.engine.name()
        )));
    }
    let mut sim = Simulation::new(cfg.clone(), obj, x0)?;
    let mut out = Vec::with_capacity(cfg.rounds);
    for _ in 0..cfg.rounds {
        sim.step()?;
        out.push(sim.model().clone());
    }
    Ok(out)
}
