//! Sampling-based trajectory optimizer over behavioral inputs.
//!
//! Each iteration draws behavioral inputs `b = (b_d, b_v)` from a Gaussian,
//! maps them to trajectories with the Frenet planner, projects those onto
//! the constraint set, keeps the `n_c` least-violating samples, scores them by
//!
//! ```text
//! c_aug = smoothness + w_risk · risk + w_pen · ‖max(0, g)‖²
//! ```
//!
//! and refits the Gaussian to the `n_elite` cheapest with exponential weights
//! `ωᵢ = exp(−cᵢ/γ)` blended by the learning rate `η`.

mod cost;
mod projection;

pub use cost::{smoothness_cost, CostWeights};
pub use projection::{inequality_residual, project, ConstraintSpec, Projection, Projector};

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::frenet::{
    BehavioralInput, BoundaryConditions, CurvatureProfile, EgoTrajectory, FrenetPlanner,
    PlannerGains, VehicleParams, DEFAULT_DT, DEFAULT_HORIZON,
};
use crate::risk::{evaluate_risk, residuals, CvarConfig, ObstacleRisk, RiskTag};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

pub const DEFAULT_RISK_WEIGHT: f64 = 1e5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub e_max: usize,
    pub n: usize,
    pub n_c: usize,
    pub n_elite: usize,
    pub gamma: f64,
    pub eta: f64,
    pub proj_iters: usize,
    /// Initial `(b_d, b_v)` mean; `None` starts at `(d_init, v_x_init)`.
    pub init_mean: Option<[f64; 2]>,
    pub init_cov: [[f64; 2]; 2],
    /// Floor on the diagonal of the refitted covariance.
    pub cov_floor: f64,
    /// Multiplier on the risk term of the augmented cost. Large enough by
    /// default that every risk cost is driven to zero on its own samples
    /// whenever the scene allows it.
    pub risk_weight: f64,
    pub penalty_weight: f64,
    pub cvar: CvarConfig,
    pub gains: PlannerGains,
    pub horizon: usize,
    pub dt: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            e_max: 10,
            n: 100,
            n_c: 50,
            n_elite: 10,
            gamma: 1.0,
            eta: 0.6,
            proj_iters: 10,
            init_mean: None,
            init_cov: [[1.0, 0.0], [0.0, 4.0]],
            cov_floor: 1e-4,
            risk_weight: DEFAULT_RISK_WEIGHT,
            penalty_weight: 1.0,
            cvar: CvarConfig::default(),
            gains: PlannerGains::default(),
            horizon: DEFAULT_HORIZON,
            dt: DEFAULT_DT,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.e_max < 1 {
            return bad("e_max must be at least 1".into());
        }
        if !(1 <= self.n_elite && self.n_elite <= self.n_c && self.n_c <= self.n) {
            return bad(format!(
                "need 1 <= n_elite ({}) <= n_c ({}) <= n ({})",
                self.n_elite, self.n_c, self.n
            ));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad(format!("eta must lie in (0, 1], got {}", self.eta));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.proj_iters < 1 {
            return bad("proj_iters must be at least 1".into());
        }
        if !(self.risk_weight >= 0.0 && self.penalty_weight >= 0.0 && self.cov_floor >= 0.0) {
            return bad("risk_weight, penalty_weight and cov_floor must be non-negative".into());
        }
        let c = self.init_cov;
        if !(c[0][1] == c[1][0] && c[0][0] > 0.0 && c[0][0] * c[1][1] - c[0][1] * c[1][0] > 0.0) {
            return bad("init_cov must be symmetric positive definite".into());
        }
        self.gains.validate()
    }
}

/// Everything about the ego problem that does not change across iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanProblem {
    pub bc: BoundaryConditions,
    pub weights: CostWeights,
    pub constraints: ConstraintSpec,
    pub vehicle: VehicleParams,
    pub curvature: CurvatureProfile,
}

/// Per-iteration record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration_best: f64,
    pub best_cost: f64,
    /// Risk and inequality residual of the best-ever sample.
    pub risk: f64,
    pub residual_norm: f64,
    /// Fraction of the optimizer's obstacle samples the best-ever trajectory
    /// collides with.
    pub nonzero_residual_fraction: f64,
    pub mean: [f64; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanResult {
    pub best_input: BehavioralInput,
    pub best_trajectory: EgoTrajectory,
    pub best_cost: f64,
    pub best_risk: f64,
    pub best_residual: f64,
    pub trace: Vec<IterationTrace>,
}

#[derive(Debug, Clone)]
struct Evaluated {
    input: BehavioralInput,
    trajectory: EgoTrajectory,
    residual: f64,
    risk: f64,
    cost: f64,
}

/// Optimizer bound to one problem; planner and projection factorizations are
/// built once.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    problem: PlanProblem,
    planner: FrenetPlanner,
    projector: Projector,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, problem: PlanProblem) -> Result<Self> {
        cfg.validate()?;
        problem.weights.validate()?;
        problem.vehicle.validate()?;
        problem.curvature.validate()?;
        problem.bc.validate()?;
        let planner = FrenetPlanner::new(cfg.horizon, cfg.dt, cfg.gains)?;
        let projector = Projector::new(cfg.horizon, cfg.dt, problem.constraints)?;
        Ok(Self {
            cfg,
            problem,
            planner,
            projector,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn problem(&self) -> &PlanProblem {
        &self.problem
    }

    pub fn planner(&self) -> &FrenetPlanner {
        &self.planner
    }

    /// Replace the boundary conditions, keeping the factorizations.
    pub fn set_boundary_conditions(&mut self, bc: BoundaryConditions) -> Result<()> {
        bc.validate()?;
        self.problem.bc = bc;
        Ok(())
    }

    fn project_sample(&self, b: BehavioralInput) -> Option<(EgoTrajectory, f64)> {
        let raw = self.planner.plan(b, &self.problem.bc).ok()?;
        let p = self
            .projector
            .project(&raw, &self.problem.bc, self.cfg.proj_iters)
            .ok()?;
        Some((p.trajectory, p.residual))
    }

    fn score(
        &self,
        input: BehavioralInput,
        trajectory: EgoTrajectory,
        residual: f64,
        obstacles: &[ObstacleRisk],
        tag: RiskTag,
    ) -> Option<Evaluated> {
        let p = &self.problem;
        let smooth = smoothness_cost(&trajectory, &p.curvature, &p.vehicle, &p.weights).ok()?;
        let risk = evaluate_risk(tag, &trajectory, obstacles, &p.vehicle, self.cfg.cvar).ok()?;
        let cost =
            smooth + self.cfg.risk_weight * risk + self.cfg.penalty_weight * residual * residual;
        cost.is_finite().then_some(Evaluated {
            input,
            trajectory,
            residual,
            risk,
            cost,
        })
    }

    fn collision_fraction(&self, traj: &EgoTrajectory, obstacles: &[ObstacleRisk]) -> f64 {
        let (mut hit, mut total) = (0usize, 0usize);
        for ob in obstacles {
            if let Ok(r) = residuals(traj, &ob.samples, &self.problem.vehicle) {
                hit += r.iter().filter(|&&v| v > 0.0).count();
                total += r.len();
            }
        }
        if total == 0 {
            0.0
        } else {
            hit as f64 / total as f64
        }
    }

    pub fn plan(&self, obstacles: &[ObstacleRisk], tag: RiskTag) -> Result<PlanResult> {
        for ob in obstacles {
            crate::error::ensure_dim(self.cfg.horizon, ob.samples.horizon())?;
        }
        let cfg = &self.cfg;
        let bc = &self.problem.bc;
        let mut mean = Vector2::from(cfg.init_mean.unwrap_or([bc.d_init, bc.v_x_init]));
        let c = cfg.init_cov;
        let mut cov = Matrix2::new(c[0][0], c[0][1], c[1][0], c[1][1]);
        let mut best: Option<Evaluated> = None;
        let mut trace = Vec::with_capacity(cfg.e_max);

        for it in 0..cfg.e_max {
            let l = cov
                .cholesky()
                .ok_or(Error::SingularSystem("behavioral covariance"))?
                .l();
            let draws: Vec<BehavioralInput> = (0..cfg.n)
                .map(|i| {
                    let mut rng = stream_rng(cfg.seed, Stream::Optimizer, it as u64, i as u64);
                    let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                    let x = mean + l * z;
                    BehavioralInput {
                        b_d: x[0],
                        b_v: x[1],
                    }
                })
                .collect();
            let projected: Vec<Option<(EgoTrajectory, f64)>> =
                draws.par_iter().map(|b| self.project_sample(*b)).collect();

            let mut by_residual: Vec<usize> =
                (0..cfg.n).filter(|&i| projected[i].is_some()).collect();
            by_residual.sort_by(|&a, &b| {
                let (ra, rb) = (
                    projected[a].as_ref().unwrap().1,
                    projected[b].as_ref().unwrap().1,
                );
                ra.total_cmp(&rb).then(a.cmp(&b))
            });
            by_residual.truncate(cfg.n_c);

            let mut projected = projected;
            let candidates: Vec<(usize, BehavioralInput, EgoTrajectory, f64)> = by_residual
                .iter()
                .map(|&i| {
                    let (t, r) = projected[i].take().unwrap();
                    (i, draws[i], t, r)
                })
                .collect();
            let scored: Vec<(usize, Evaluated)> = candidates
                .into_par_iter()
                .filter_map(|(i, b, t, r)| self.score(b, t, r, obstacles, tag).map(|e| (i, e)))
                .collect();
            if scored.is_empty() {
                return Err(Error::Degenerate(format!(
                    "every behavioral sample failed in iteration {it}"
                )));
            }
            let mut order: Vec<usize> = (0..scored.len()).collect();
            order.sort_by(|&a, &b| {
                scored[a]
                    .1
                    .cost
                    .total_cmp(&scored[b].1.cost)
                    .then(scored[a].0.cmp(&scored[b].0))
            });
            order.truncate(cfg.n_elite);

            let c_min = scored[order[0]].1.cost;
            let w: Vec<f64> = order
                .iter()
                .map(|&j| (-(scored[j].1.cost - c_min) / cfg.gamma).exp())
                .collect();
            let w_sum: f64 = w.iter().sum();
            let x = |j: usize| Vector2::new(scored[j].1.input.b_d, scored[j].1.input.b_v);
            let weighted_mean = order
                .iter()
                .zip(&w)
                .fold(Vector2::zeros(), |acc, (&j, wi)| acc + x(j) * *wi)
                / w_sum;
            let new_mean = mean * (1.0 - cfg.eta) + weighted_mean * cfg.eta;
            let weighted_cov = order
                .iter()
                .zip(&w)
                .fold(Matrix2::zeros(), |acc, (&j, wi)| {
                    let dx = x(j) - new_mean;
                    acc + dx * dx.transpose() * *wi
                })
                / w_sum;
            cov = cov * (1.0 - cfg.eta) + weighted_cov * cfg.eta;
            for i in 0..2 {
                cov[(i, i)] = cov[(i, i)].max(cfg.cov_floor);
            }
            mean = new_mean;

            let mut scored = scored;
            let winner = scored.swap_remove(order[0]).1;
            if best.as_ref().is_none_or(|b| winner.cost < b.cost) {
                best = Some(winner);
            }
            let b = best.as_ref().unwrap();
            trace.push(IterationTrace {
                iteration_best: c_min,
                best_cost: b.cost,
                risk: b.risk,
                residual_norm: b.residual,
                nonzero_residual_fraction: self.collision_fraction(&b.trajectory, obstacles),
                mean: [mean[0], mean[1]],
            });
        }
        let b = best.expect("at least one iteration ran");
        Ok(PlanResult {
            best_input: b.input,
            best_trajectory: b.trajectory,
            best_cost: b.cost,
            best_risk: b.risk,
            best_residual: b.residual,
            trace,
        })
    }
}

/// One-shot planning.
pub fn plan(
    problem: &PlanProblem,
    obstacles: &[ObstacleRisk],
    tag: RiskTag,
    cfg: &OptimizerConfig,
) -> Result<PlanResult> {
    Optimizer::new(cfg.clone(), problem.clone())?.plan(obstacles, tag)
}
