//! End-to-end benchmark runs: reduce, plan, and score the plan against
//! held-out validation samples.

mod mpc;
mod report;

pub use mpc::{mpc_drive, MpcCycle, MpcLog};
pub use report::{
    aggregate, read_records_csv, write_aggregates_json, write_records_csv, write_timings_csv,
    write_trajectories_jsonl, Aggregate, BenchmarkReport, SceneRecord, Timing, TrajectoryDump,
};

use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::frenet::{EgoTrajectory, VehicleParams};
use crate::kernel::{median_pairwise_l1, KernelConfig};
use crate::optimizer::{Optimizer, OptimizerConfig, PlanResult};
use crate::reduced_set::{random_reduced_set, reduce, CemConfig, ReducedSet};
use crate::risk::{collision_f, r_saa, residuals, ObstacleRisk, ObstacleSampleSet, RiskTag};
use crate::rng::derive_seed;
use crate::scenario::{ScenarioSpec, Scene};
use crate::{Error, Result};

/// Fraction of validation rows the trajectory collides with.
pub fn collision_rate(
    ego: &EgoTrajectory,
    validation: &ObstacleSampleSet,
    params: &VehicleParams,
) -> Result<f64> {
    r_saa(&residuals(ego, validation, params)?)
}

/// Fraction of joint validation draws (row `j` of every obstacle) in which
/// the trajectory collides with at least one obstacle.
pub fn joint_collision_rate(
    ego: &EgoTrajectory,
    validation: &[ObstacleSampleSet],
    params: &VehicleParams,
) -> Result<f64> {
    let first = validation.first().ok_or(Error::Empty("validation sets"))?;
    let n = first.len();
    for v in validation {
        crate::error::ensure_dim(n, v.len())?;
    }
    let hits: Vec<bool> = (0..n)
        .into_par_iter()
        .map(|j| {
            validation.iter().try_fold(false, |hit, v| {
                Ok::<_, Error>(hit || collision_f(ego, v.row(j), params)?.residual > 0.0)
            })
        })
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / n as f64)
}

/// How a run builds the per-obstacle sample sets the optimizer sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// MMD on the optimized reduced set; baselines on `N′` direct draws.
    Standard,
    /// MMD on `N′` random rows with optimal weights.
    RandomReducedSet,
    /// Baselines on the optimized reduced set with uniform weights.
    BaselineReducedSet,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Standard => "standard",
            Self::RandomReducedSet => "random_reduced_set",
            Self::BaselineReducedSet => "baseline_reduced_set",
        }
    }

    pub fn applies_to(&self, tag: RiskTag) -> bool {
        match self {
            Self::Standard => true,
            Self::RandomReducedSet => tag == RiskTag::Mmd,
            Self::BaselineReducedSet => tag != RiskTag::Mmd,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            Self::Standard,
            Self::RandomReducedSet,
            Self::BaselineReducedSet,
        ]
        .into_iter()
        .find(|v| v.as_str() == s)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown variant '{s}'")))
    }
}

pub const DEFAULT_RESIDUAL_SIGMA: f64 = 1.0;

/// Module configurations shared by every run of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub cem: CemConfig,
    pub optimizer: OptimizerConfig,
    /// Residual-space kernel bandwidth; `None` uses each reduced set's own
    /// bandwidth. Residuals are dimensionless and at most 1, so the default
    /// is a fixed unit bandwidth.
    pub residual_sigma: Option<f64>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            cem: CemConfig::default(),
            optimizer: OptimizerConfig::default(),
            residual_sigma: Some(DEFAULT_RESIDUAL_SIGMA),
        }
    }
}

impl RunSettings {
    pub fn validate(&self) -> Result<()> {
        self.cem.validate()?;
        self.optimizer.validate()?;
        if let Some(s) = self.residual_sigma {
            KernelConfig::new(s)?;
        }
        Ok(())
    }

    fn residual_kernel(&self) -> Result<Option<KernelConfig>> {
        self.residual_sigma.map(KernelConfig::new).transpose()
    }
}

/// One cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    pub risk: RiskTag,
    pub n_prime: usize,
    pub seed: u64,
    pub variant: Variant,
    pub settings: RunSettings,
}

/// Everything a single run produces.
#[derive(Debug, Clone)]
pub struct SceneOutcome {
    pub record: SceneRecord,
    pub timing: Timing,
    pub plan: Option<PlanResult>,
    pub reduced_sets: Vec<ReducedSet>,
}

/// Sample sets (with weights) the optimizer sees for one obstacle, plus the
/// reduced set when one was computed.
pub fn optimizer_inputs(
    scene: &Scene,
    tag: RiskTag,
    n_prime: usize,
    variant: Variant,
    settings: &RunSettings,
) -> Result<(Vec<ObstacleRisk>, Vec<ReducedSet>)> {
    let residual_kernel = settings.residual_kernel()?;
    let mut risks = Vec::with_capacity(scene.optimization.len());
    let mut reduced = Vec::new();
    for (j, opt) in scene.optimization.iter().enumerate() {
        if n_prime < 1 || n_prime > opt.len() {
            return Err(Error::OutOfRange(format!(
                "n_prime {n_prime} not in 1..={}",
                opt.len()
            )));
        }
        let cem = CemConfig {
            seed: derive_seed(scene.seed, &[j as u64, 1]),
            ..settings.cem.clone()
        };
        let heuristic = median_pairwise_l1(opt.rows()).unwrap_or(1.0);
        let direct = || -> Result<ObstacleRisk> {
            let first: Vec<usize> = (0..n_prime).collect();
            Ok(ObstacleRisk::uniform(
                opt.subset(&first)?,
                KernelConfig::new(heuristic)?,
            ))
        };
        let risk = match (tag, variant) {
            (RiskTag::Mmd, Variant::RandomReducedSet) => {
                let rs = random_reduced_set(opt, n_prime, heuristic, scene.seed, j as u64)?;
                let r = ObstacleRisk::from_reduced(&rs, residual_kernel)?;
                reduced.push(rs);
                r
            }
            (RiskTag::Mmd, _) => {
                let rs = reduce(opt, n_prime, &cem)?;
                let r = ObstacleRisk::from_reduced(&rs, residual_kernel)?;
                reduced.push(rs);
                r
            }
            (_, Variant::BaselineReducedSet) => {
                let rs = reduce(opt, n_prime, &cem)?;
                let r = ObstacleRisk::uniform(rs.samples.clone(), rs.kernel()?);
                reduced.push(rs);
                r
            }
            _ => direct()?,
        };
        risks.push(risk);
    }
    Ok((risks, reduced))
}

pub fn run_scene(cfg: &RunConfig) -> SceneOutcome {
    let mut record = SceneRecord {
        scenario: cfg.scenario.name.clone(),
        risk: cfg.risk,
        n_prime: cfg.n_prime,
        seed: cfg.seed,
        variant: cfg.variant,
        status: "ok".into(),
        collision_rate: f64::NAN,
        final_risk: f64::NAN,
        final_residual: f64::NAN,
        final_cost: f64::NAN,
        behavior_d: f64::NAN,
        behavior_v: f64::NAN,
    };
    let mut timing = Timing {
        reduce_ms: 0.0,
        plan_ms: 0.0,
    };
    let mut plan = None;
    let mut reduced_sets = Vec::new();
    let result = (|| -> Result<()> {
        cfg.settings.validate()?;
        if !cfg.variant.applies_to(cfg.risk) {
            return Err(Error::InvalidConfig(format!(
                "variant {} does not apply to {}",
                cfg.variant, cfg.risk
            )));
        }
        let scene = cfg.scenario.instantiate(cfg.seed)?;
        let t0 = Instant::now();
        let (inputs, rs) =
            optimizer_inputs(&scene, cfg.risk, cfg.n_prime, cfg.variant, &cfg.settings)?;
        timing.reduce_ms = t0.elapsed().as_secs_f64() * 1e3;
        reduced_sets = rs;

        let opt_cfg = OptimizerConfig {
            seed: derive_seed(cfg.seed, &[2]),
            horizon: cfg.scenario.horizon,
            dt: cfg.scenario.dt,
            gains: cfg.scenario.gains,
            ..cfg.settings.optimizer.clone()
        };
        let t1 = Instant::now();
        let result = Optimizer::new(opt_cfg, scene.problem.clone())?.plan(&inputs, cfg.risk)?;
        timing.plan_ms = t1.elapsed().as_secs_f64() * 1e3;

        record.collision_rate = joint_collision_rate(
            &result.best_trajectory,
            &scene.validation,
            &scene.problem.vehicle,
        )?;
        record.final_risk = result.best_risk;
        record.final_residual = result.best_residual;
        record.final_cost = result.best_cost;
        record.behavior_d = result.best_input.b_d;
        record.behavior_v = result.best_input.b_v;
        plan = Some(result);
        Ok(())
    })();
    if let Err(e) = result {
        record.status = format!("error: {e}");
    }
    SceneOutcome {
        record,
        timing,
        plan,
        reduced_sets,
    }
}

/// Cross-product of scenarios, risks, `N′`, variants and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub scenarios: Vec<ScenarioSpec>,
    pub risks: Vec<RiskTag>,
    pub n_primes: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub settings: RunSettings,
}

fn default_variants() -> Vec<Variant> {
    vec![Variant::Standard]
}

impl SweepConfig {
    /// Runs in deterministic order: scenario, risk, `N′`, variant, seed.
    pub fn runs(&self) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for sc in &self.scenarios {
            for &risk in &self.risks {
                for &n_prime in &self.n_primes {
                    for &variant in &self.variants {
                        if !variant.applies_to(risk) {
                            continue;
                        }
                        for &seed in &self.seeds {
                            out.push(RunConfig {
                                scenario: sc.clone(),
                                risk,
                                n_prime,
                                seed,
                                variant,
                                settings: self.settings.clone(),
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Run every cell of the sweep on `workers` threads (`0` = all cores) and
/// aggregate. Records come back in [`SweepConfig::runs`] order regardless of
/// the worker count.
pub fn run_sweep(
    cfg: &SweepConfig,
    workers: usize,
) -> Result<(BenchmarkReport, Vec<SceneOutcome>)> {
    run_many(&cfg.runs(), workers)
}

/// Like [`run_sweep`] for an explicit run list; output follows input order.
pub fn run_many(
    runs: &[RunConfig],
    workers: usize,
) -> Result<(BenchmarkReport, Vec<SceneOutcome>)> {
    if runs.is_empty() {
        return Err(Error::Empty("sweep grid"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    let outcomes: Vec<SceneOutcome> = pool.install(|| runs.par_iter().map(run_scene).collect());
    let records: Vec<SceneRecord> = outcomes.iter().map(|o| o.record.clone()).collect();
    let report = BenchmarkReport {
        aggregates: aggregate(&records),
        timings: outcomes.iter().map(|o| o.timing).collect(),
        records,
    };
    Ok((report, outcomes))
}
