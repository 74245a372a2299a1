//! Frenet-frame vehicle model: kinematic bicycle dynamics, control recovery
//! from position trajectories, and the closed-form behavioral planner.

mod diff;
mod dynamics;
mod flatness;
mod planner;

pub use diff::{first_derivative, second_derivative, DiffOperators};
pub use dynamics::{rollout, step_dynamics};
pub use flatness::{flat_controls, forward_difference};
pub use planner::{frenet_plan, planner_objective, FrenetPlanner, PlannerGains};

use serde::{Deserialize, Serialize};

use crate::error::ensure_dim;
use crate::{Error, Result};

/// Default planning horizon in steps.
pub const DEFAULT_HORIZON: usize = 50;
/// Default step length in seconds.
pub const DEFAULT_DT: f64 = 0.1;
/// `|1 − dκ|` below this is a Frenet singularity.
pub const SINGULARITY_EPS: f64 = 1e-6;
/// Tolerance for stored derivatives against the stencils.
pub const DERIVATIVE_TOL: f64 = 1e-6;

/// Ego geometry and actuation limits.
///
/// `ellipse_a1`/`ellipse_a2` are the semi-axes of the combined (ego plus
/// obstacle) axis-aligned collision ellipse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub ellipse_a1: f64,
    pub ellipse_a2: f64,
    pub theta_max: f64,
    pub v_max: f64,
    pub a_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.5,
            ellipse_a1: 4.0,
            ellipse_a2: 1.4,
            theta_max: 0.6,
            v_max: 15.0,
            a_max: 6.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("wheelbase", self.wheelbase),
            ("ellipse_a1", self.ellipse_a1),
            ("ellipse_a2", self.ellipse_a2),
            ("theta_max", self.theta_max),
            ("v_max", self.v_max),
            ("a_max", self.a_max),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "vehicle {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Full Frenet-frame state. The rate fields are the model's own state
/// variables: they are refreshed from the previous step, not derived from
/// the current pose.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrenetState {
    pub s: f64,
    pub d: f64,
    pub psi: f64,
    pub v: f64,
    pub s_dot: f64,
    pub d_dot: f64,
    pub psi_dot: f64,
}

impl FrenetState {
    /// State with rates computed from `(v, psi, d)` at rest steering, i.e. the
    /// rates the model would produce from this pose.
    pub fn with_consistent_rates(
        s: f64,
        d: f64,
        psi: f64,
        v: f64,
        kappa: &CurvatureProfile,
    ) -> Result<Self> {
        let k = kappa.at(s);
        let scale = 1.0 - d * k;
        if scale.abs() <= SINGULARITY_EPS {
            return Err(Error::Singularity {
                step: None,
                value: scale,
            });
        }
        let s_dot = v * psi.cos() / scale;
        Ok(Self {
            s,
            d,
            psi,
            v,
            s_dot,
            d_dot: v * psi.sin(),
            psi_dot: 0.0,
        })
    }
}

/// Curvature of the reference path as a function of arc length.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurvatureProfile {
    #[default]
    Zero,
    Constant {
        kappa: f64,
    },
    /// Piecewise-linear through `(s, κ)` knots, held constant outside.
    Table {
        knots: Vec<(f64, f64)>,
    },
}

impl CurvatureProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Zero => Ok(()),
            Self::Constant { kappa } if kappa.is_finite() => Ok(()),
            Self::Constant { kappa } => Err(Error::InvalidConfig(format!("curvature {kappa}"))),
            Self::Table { knots } => {
                if knots.is_empty() {
                    return Err(Error::Empty("curvature table"));
                }
                if knots.iter().any(|(s, k)| !s.is_finite() || !k.is_finite()) {
                    return Err(Error::InvalidConfig("non-finite curvature knot".into()));
                }
                if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::InvalidConfig(
                        "curvature knots must be strictly increasing in s".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn at(&self, s: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant { kappa } => *kappa,
            Self::Table { knots } => {
                let (first, last) = (knots[0], knots[knots.len() - 1]);
                if s <= first.0 {
                    return first.1;
                }
                if s >= last.0 {
                    return last.1;
                }
                let i = knots.partition_point(|(ks, _)| *ks <= s);
                let (s0, k0) = knots[i - 1];
                let (s1, k1) = knots[i];
                k0 + (k1 - k0) * (s - s0) / (s1 - s0)
            }
        }
    }
}

/// Discretized ego motion over `H` steps: positions and their first and
/// second derivatives under the stencils in [`first_derivative`] and
/// [`second_derivative`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EgoTrajectory {
    dt: f64,
    s: Vec<f64>,
    d: Vec<f64>,
    s_dot: Vec<f64>,
    d_dot: Vec<f64>,
    s_ddot: Vec<f64>,
    d_ddot: Vec<f64>,
}

impl EgoTrajectory {
    pub fn from_positions(s: Vec<f64>, d: Vec<f64>, dt: f64) -> Result<Self> {
        ensure_dim(s.len(), d.len())?;
        if s.len() < 2 {
            return Err(Error::OutOfRange(format!("horizon {} < 2", s.len())));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "dt must be positive, got {dt}"
            )));
        }
        Ok(Self {
            s_dot: first_derivative(&s, dt),
            d_dot: first_derivative(&d, dt),
            s_ddot: second_derivative(&s, dt),
            d_ddot: second_derivative(&d, dt),
            dt,
            s,
            d,
        })
    }

    /// Build from explicit derivative vectors, checking them against the
    /// stencils.
    #[allow(clippy::too_many_arguments)]
    pub fn with_derivatives(
        dt: f64,
        s: Vec<f64>,
        d: Vec<f64>,
        s_dot: Vec<f64>,
        d_dot: Vec<f64>,
        s_ddot: Vec<f64>,
        d_ddot: Vec<f64>,
    ) -> Result<Self> {
        let traj = Self::from_positions(s, d, dt)?;
        let given = [&s_dot, &d_dot, &s_ddot, &d_ddot];
        let computed = [&traj.s_dot, &traj.d_dot, &traj.s_ddot, &traj.d_ddot];
        for (g, c) in given.iter().zip(computed) {
            ensure_dim(c.len(), g.len())?;
            let scale = 1.0 + c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if g.iter()
                .zip(c.iter())
                .any(|(a, b)| (a - b).abs() > DERIVATIVE_TOL * scale)
            {
                return Err(Error::InvalidConfig(
                    "derivatives inconsistent with positions".into(),
                ));
            }
        }
        Ok(traj)
    }

    pub fn horizon(&self) -> usize {
        self.s.len()
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn s(&self) -> &[f64] {
        &self.s
    }
    pub fn d(&self) -> &[f64] {
        &self.d
    }
    pub fn s_dot(&self) -> &[f64] {
        &self.s_dot
    }
    pub fn d_dot(&self) -> &[f64] {
        &self.d_dot
    }
    pub fn s_ddot(&self) -> &[f64] {
        &self.s_ddot
    }
    pub fn d_ddot(&self) -> &[f64] {
        &self.d_ddot
    }

    /// Rigid shift of the whole trajectory.
    pub fn translated(&self, ds: f64, dd: f64) -> Self {
        let mut t = self.clone();
        t.s.iter_mut().for_each(|v| *v += ds);
        t.d.iter_mut().for_each(|v| *v += dd);
        t
    }
}

/// Control inputs recovered from a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlTrace {
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    pub psi: Vec<f64>,
    pub psi_dot: Vec<f64>,
    pub theta: Vec<f64>,
}

/// Lateral-offset and velocity setpoints driving the behavioral planner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehavioralInput {
    pub b_d: f64,
    pub b_v: f64,
}

impl BehavioralInput {
    pub fn new(b_d: f64, b_v: f64) -> Result<Self> {
        if b_d.is_finite() && b_v.is_finite() {
            Ok(Self { b_d, b_v })
        } else {
            Err(Error::InvalidConfig(format!(
                "non-finite behavioral input ({b_d}, {b_v})"
            )))
        }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.b_d, self.b_v]
    }
}

/// Boundary conditions of a plan. The plan always starts at `s = 0`, and the
/// terminal lateral velocity is pinned to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    pub v_x_init: f64,
    pub a_x_init: f64,
    pub d_init: f64,
    pub v_y_init: f64,
    pub a_y_init: f64,
}

impl BoundaryConditions {
    pub fn new(v_x_init: f64, d_init: f64) -> Self {
        Self {
            v_x_init,
            a_x_init: 0.0,
            d_init,
            v_y_init: 0.0,
            a_y_init: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.v_x_init,
            self.a_x_init,
            self.d_init,
            self.v_y_init,
            self.a_y_init,
        ];
        if all.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidConfig("non-finite boundary condition".into()))
        }
    }

    /// Largest violation of the boundary conditions by `traj`.
    pub fn residual(&self, traj: &EgoTrajectory) -> f64 {
        let h = traj.horizon();
        [
            traj.s()[0],
            traj.s_dot()[0] - self.v_x_init,
            traj.s_ddot()[0] - self.a_x_init,
            traj.d()[0] - self.d_init,
            traj.d_dot()[0] - self.v_y_init,
            traj.d_ddot()[0] - self.a_y_init,
            traj.d_dot()[h - 1],
        ]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}
