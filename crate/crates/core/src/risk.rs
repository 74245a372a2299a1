//! Collision residuals and the risk surrogates built on them.
//!
//! Ego and obstacle footprints are combined into one axis-aligned ellipse
//! with semi-axes `(a1, a2)`. At step `k`
//!
//! ```text
//! f_k = 1 − (s_k − s_o,k)²/a1² − (d_k − d_o,k)²/a2²
//! ```
//!
//! is positive inside the ellipse. A sample's residual is
//! `max(0, max_k f_k)`, zero iff the ego clears that obstacle sample.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ensure_dim;
use crate::frenet::{EgoTrajectory, VehicleParams};
use crate::kernel::{check_weights, mmd_to_dirac, KernelConfig};
use crate::reduced_set::ReducedSet;
use crate::{Error, Result};

/// Residual batches larger than this are evaluated in parallel.
const PAR_RESIDUAL_MIN: usize = 2048;

/// `N` obstacle trajectory samples over a horizon `H`.
///
/// Each row is the stacked `2H` vector `[s₀, d₀, s₁, d₁, …]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SampleSetRepr")]
pub struct ObstacleSampleSet {
    horizon: usize,
    dt: f64,
    rows: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleSetRepr {
    horizon: usize,
    dt: f64,
    rows: Vec<Vec<f64>>,
}

impl TryFrom<SampleSetRepr> for ObstacleSampleSet {
    type Error = Error;
    fn try_from(r: SampleSetRepr) -> Result<Self> {
        Self::new(r.rows, r.horizon, r.dt)
    }
}

impl ObstacleSampleSet {
    pub fn new(rows: Vec<Vec<f64>>, horizon: usize, dt: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("obstacle samples"));
        }
        if horizon < 1 {
            return Err(Error::OutOfRange(
                "obstacle horizon must be positive".into(),
            ));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "dt must be positive, got {dt}"
            )));
        }
        for row in &rows {
            ensure_dim(2 * horizon, row.len())?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig("non-finite obstacle waypoint".into()));
            }
        }
        Ok(Self { horizon, dt, rows })
    }

    /// Build from per-sample `(s, d)` sequences.
    pub fn from_positions(samples: &[(Vec<f64>, Vec<f64>)], dt: f64) -> Result<Self> {
        let horizon = samples
            .first()
            .map(|(s, _)| s.len())
            .ok_or(Error::Empty("obstacle samples"))?;
        let mut rows = Vec::with_capacity(samples.len());
        for (s, d) in samples {
            ensure_dim(horizon, s.len())?;
            ensure_dim(horizon, d.len())?;
            rows.push(interleave(s, d));
        }
        Self::new(rows, horizon, dt)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn len(&self) -> usize {
        self.rows.len()
    }
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    /// Waypoint `(s, d)` of sample `i` at step `k`.
    pub fn waypoint(&self, i: usize, k: usize) -> (f64, f64) {
        (self.rows[i][2 * k], self.rows[i][2 * k + 1])
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut rows = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.rows.len() {
                return Err(Error::OutOfRange(format!(
                    "row index {i} >= {}",
                    self.rows.len()
                )));
            }
            rows.push(self.rows[i].clone());
        }
        Self::new(rows, self.horizon, self.dt)
    }

    /// Advance every sample by `steps`, holding each one's last waypoint
    /// velocity constant to refill the tail.
    pub fn shifted(&self, steps: usize) -> Self {
        let h = self.horizon;
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let (vs, vd) = if h >= 2 {
                    (
                        row[2 * h - 2] - row[2 * h - 4],
                        row[2 * h - 1] - row[2 * h - 3],
                    )
                } else {
                    (0.0, 0.0)
                };
                let mut out = Vec::with_capacity(2 * h);
                for k in 0..h {
                    let src = k + steps;
                    if src < h {
                        out.extend_from_slice(&row[2 * src..2 * src + 2]);
                    } else {
                        let extra = (src - (h - 1)) as f64;
                        out.push(row[2 * h - 2] + vs * extra);
                        out.push(row[2 * h - 1] + vd * extra);
                    }
                }
                out
            })
            .collect();
        Self {
            horizon: h,
            dt: self.dt,
            rows,
        }
    }

    /// The same samples expressed relative to a moved origin.
    pub fn translated(&self, ds: f64, dd: f64) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|row| row.chunks(2).flat_map(|p| [p[0] + ds, p[1] + dd]).collect())
            .collect();
        Self {
            horizon: self.horizon,
            dt: self.dt,
            rows,
        }
    }
}

pub(crate) fn interleave(s: &[f64], d: &[f64]) -> Vec<f64> {
    s.iter().zip(d).flat_map(|(a, b)| [*a, *b]).collect()
}

/// Worst-case collision-constraint value of one obstacle sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample {
    pub worst_f: f64,
    pub residual: f64,
    pub argmax_k: usize,
}

pub fn collision_f(
    ego: &EgoTrajectory,
    tau: &[f64],
    params: &VehicleParams,
) -> Result<ResidualSample> {
    let h = ego.horizon();
    ensure_dim(2 * h, tau.len())?;
    let (ia1, ia2) = (
        1.0 / (params.ellipse_a1 * params.ellipse_a1),
        1.0 / (params.ellipse_a2 * params.ellipse_a2),
    );
    let (s, d) = (ego.s(), ego.d());
    let mut worst_f = f64::NEG_INFINITY;
    let mut argmax_k = 0;
    for k in 0..h {
        let ds = s[k] - tau[2 * k];
        let dd = d[k] - tau[2 * k + 1];
        let f = 1.0 - ds * ds * ia1 - dd * dd * ia2;
        if f > worst_f {
            worst_f = f;
            argmax_k = k;
        }
    }
    Ok(ResidualSample {
        worst_f,
        residual: worst_f.max(0.0),
        argmax_k,
    })
}

/// Residual scalars of `ego` against every row of `samples`.
pub fn residuals(
    ego: &EgoTrajectory,
    samples: &ObstacleSampleSet,
    params: &VehicleParams,
) -> Result<Vec<f64>> {
    ensure_dim(ego.horizon(), samples.horizon())?;
    let eval = |row: &Vec<f64>| collision_f(ego, row, params).map(|r| r.residual);
    if samples.len() >= PAR_RESIDUAL_MIN {
        samples.rows().par_iter().map(eval).collect()
    } else {
        samples.rows().iter().map(eval).collect()
    }
}

fn non_empty(r: &[f64]) -> Result<()> {
    if r.is_empty() {
        Err(Error::Empty("residuals"))
    } else {
        Ok(())
    }
}

/// Fraction of samples in collision (indicator average).
pub fn r_saa(residuals: &[f64]) -> Result<f64> {
    non_empty(residuals)?;
    Ok(residuals.iter().filter(|&&r| r > 0.0).count() as f64 / residuals.len() as f64)
}

/// Confidence level of the empirical CVaR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCvar")]
pub struct CvarConfig {
    alpha: f64,
}

#[derive(Deserialize)]
struct RawCvar {
    alpha: f64,
}

impl TryFrom<RawCvar> for CvarConfig {
    type Error = Error;
    fn try_from(raw: RawCvar) -> Result<Self> {
        Self::new(raw.alpha)
    }
}

impl Default for CvarConfig {
    fn default() -> Self {
        Self { alpha: 0.9 }
    }
}

impl CvarConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self { alpha })
        } else {
            Err(Error::InvalidConfig(format!(
                "CVaR alpha must lie in (0, 1), got {alpha}"
            )))
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of upper-tail samples averaged out of `n`.
    pub fn tail_count(&self, n: usize) -> usize {
        // The small offset keeps e.g. (1 − 0.9)·10 from rounding up to 2.
        let m = ((1.0 - self.alpha) * n as f64 - 1e-9).ceil() as usize;
        m.clamp(1, n.max(1))
    }
}

/// Mean of the `⌈(1−α)N⌉` largest residuals.
pub fn r_cvar(residuals: &[f64], cfg: CvarConfig) -> Result<f64> {
    non_empty(residuals)?;
    let mut sorted = residuals.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let m = cfg.tail_count(sorted.len());
    Ok(sorted[..m].iter().sum::<f64>() / m as f64)
}

/// Squared MMD between the weighted residual distribution and a point mass
/// at zero.
pub fn r_mmd(residuals: &[f64], weights: &[f64], cfg: KernelConfig) -> Result<f64> {
    mmd_to_dirac(residuals, weights, cfg)
}

/// Sum of squared residuals: every sampled constraint as a quadratic penalty.
pub fn scenario_penalty(residuals: &[f64]) -> Result<f64> {
    non_empty(residuals)?;
    Ok(residuals.iter().map(|r| r * r).sum())
}

/// Which risk surrogate the optimizer minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskTag {
    Mmd,
    Saa,
    Cvar,
    Scenario,
}

impl RiskTag {
    pub const ALL: [RiskTag; 4] = [RiskTag::Mmd, RiskTag::Saa, RiskTag::Cvar, RiskTag::Scenario];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Mmd => "mmd",
            Self::Saa => "saa",
            Self::Cvar => "cvar",
            Self::Scenario => "scenario",
        }
    }
}

impl fmt::Display for RiskTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RiskTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown risk '{s}' (expected mmd, saa, cvar or scenario)"
                ))
            })
    }
}

/// Samples of one obstacle as seen by the risk term: rows, their weights and
/// the residual-space kernel.
#[derive(Debug, Clone)]
pub struct ObstacleRisk {
    pub samples: ObstacleSampleSet,
    pub weights: Vec<f64>,
    pub residual_kernel: KernelConfig,
}

impl ObstacleRisk {
    pub fn new(
        samples: ObstacleSampleSet,
        weights: Vec<f64>,
        residual_kernel: KernelConfig,
    ) -> Result<Self> {
        ensure_dim(samples.len(), weights.len())?;
        check_weights(&weights)?;
        Ok(Self {
            samples,
            weights,
            residual_kernel,
        })
    }

    pub fn uniform(samples: ObstacleSampleSet, residual_kernel: KernelConfig) -> Self {
        let n = samples.len();
        Self {
            samples,
            weights: vec![1.0 / n as f64; n],
            residual_kernel,
        }
    }

    /// A reduced set's rows with its weights; the residual kernel defaults to
    /// the reduced set's own bandwidth.
    pub fn from_reduced(rs: &ReducedSet, residual_kernel: Option<KernelConfig>) -> Result<Self> {
        let kernel = residual_kernel.unwrap_or(KernelConfig::new(rs.sigma)?);
        Self::new(rs.samples.clone(), rs.beta.clone(), kernel)
    }
}

/// Risk of `ego` against every obstacle under `tag`, summed over obstacles.
pub fn evaluate_risk(
    tag: RiskTag,
    ego: &EgoTrajectory,
    obstacles: &[ObstacleRisk],
    params: &VehicleParams,
    cvar: CvarConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for ob in obstacles {
        let r = residuals(ego, &ob.samples, params)?;
        total += match tag {
            RiskTag::Mmd => r_mmd(&r, &ob.weights, ob.residual_kernel)?,
            RiskTag::Saa => r_saa(&r)?,
            RiskTag::Cvar => r_cvar(&r, cvar)?,
            RiskTag::Scenario => scenario_penalty(&r)?,
        };
    }
    Ok(total)
}

/// Sum of per-obstacle MMD risks, each on its own reduced set.
pub fn total_risk(
    ego: &EgoTrajectory,
    per_obstacle: &[ReducedSet],
    params: &VehicleParams,
    residual_kernel: Option<KernelConfig>,
) -> Result<f64> {
    if per_obstacle.is_empty() {
        return Err(Error::Empty("obstacles"));
    }
    let obs = per_obstacle
        .iter()
        .map(|rs| ObstacleRisk::from_reduced(rs, residual_kernel))
        .collect::<Result<Vec<_>>>()?;
    evaluate_risk(RiskTag::Mmd, ego, &obs, params, CvarConfig::default())
}

/// Finite-sample deviation bound for the empirical MMD risk with kernel
/// bounded by `c_o`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationBound {
    pub deviation_bound: f64,
    pub confidence: f64,
}

pub fn finite_sample_bound(n: usize, c_o: f64, eps: f64) -> Result<DeviationBound> {
    if n == 0 {
        return Err(Error::OutOfRange("sample count must be positive".into()));
    }
    if !(c_o > 0.0 && eps > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "c_o and eps must be positive, got {c_o}, {eps}"
        )));
    }
    let n = n as f64;
    Ok(DeviationBound {
        deviation_bound: 2.0 * (2.0 * (c_o / n).sqrt() + eps),
        confidence: 1.0 - (-eps * eps * n / (4.0 * c_o)).exp(),
    })
}
