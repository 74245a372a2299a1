//! Closed-form behavioral planner.
//!
//! Decision variables are the `H` position samples of each axis. The two
//! axes decouple, so each is an equality-constrained least-squares problem:
//!
//! ```text
//! s:  Σ s̈² + (s̈ − κp(ṡ − b_v))²              s₀ = 0, ṡ₀ = v_x, s̈₀ = a_x
//! d:  Σ d̈² + (d̈ − κp(d − b_d) − κv ḋ)²        d₀, ḋ₀, d̈₀ given, ḋ_{H−1} = 0
//! ```
//!
//! Both KKT matrices depend only on `(H, dt, gains)`, so [`FrenetPlanner`]
//! factorizes them once and each plan costs two triangular solves.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{BehavioralInput, BoundaryConditions, DiffOperators, EgoTrajectory};
use crate::kkt::EqualityQp;
use crate::{Error, Result};

/// Tracking gains of the planner. The default is critically damped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerGains {
    pub kappa_p: f64,
    pub kappa_v: f64,
}

impl Default for PlannerGains {
    fn default() -> Self {
        Self::critically_damped(1.0)
    }
}

impl PlannerGains {
    pub fn critically_damped(kappa_p: f64) -> Self {
        Self {
            kappa_p,
            kappa_v: 2.0 * kappa_p.sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kappa_p > 0.0
            && self.kappa_v > 0.0
            && self.kappa_p.is_finite()
            && self.kappa_v.is_finite()
        {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "planner gains must be positive, got {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone)]
pub struct FrenetPlanner {
    horizon: usize,
    dt: f64,
    gains: PlannerGains,
    ops: DiffOperators,
    /// Residual operators `A` in `‖D2 x‖² + ‖A x + c‖²`.
    a_s: DMatrix<f64>,
    a_d: DMatrix<f64>,
    s_qp: EqualityQp,
    d_qp: EqualityQp,
}

impl FrenetPlanner {
    pub fn new(horizon: usize, dt: f64, gains: PlannerGains) -> Result<Self> {
        if horizon < 5 {
            return Err(Error::OutOfRange(format!("planner horizon {horizon} < 5")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "dt must be positive, got {dt}"
            )));
        }
        gains.validate()?;
        let h = horizon;
        let ops = DiffOperators::new(h, dt);
        let eye = DMatrix::<f64>::identity(h, h);
        let a_s = &ops.d2 - gains.kappa_p * &ops.d1;
        let a_d = &ops.d2 - gains.kappa_p * &eye - gains.kappa_v * &ops.d1;
        let d2td2 = ops.d2.transpose() * &ops.d2;
        let p_s = 2.0 * (&d2td2 + a_s.transpose() * &a_s);
        let p_d = 2.0 * (&d2td2 + a_d.transpose() * &a_d);

        let mut c_s = DMatrix::zeros(3, h);
        c_s[(0, 0)] = 1.0;
        c_s.row_mut(1).copy_from(&ops.d1.row(0));
        c_s.row_mut(2).copy_from(&ops.d2.row(0));
        let mut c_d = DMatrix::zeros(4, h);
        c_d[(0, 0)] = 1.0;
        c_d.row_mut(1).copy_from(&ops.d1.row(0));
        c_d.row_mut(2).copy_from(&ops.d2.row(0));
        c_d.row_mut(3).copy_from(&ops.d1.row(h - 1));

        Ok(Self {
            horizon,
            dt,
            gains,
            s_qp: EqualityQp::new(p_s, c_s)?,
            d_qp: EqualityQp::new(p_d, c_d)?,
            ops,
            a_s,
            a_d,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn gains(&self) -> PlannerGains {
        self.gains
    }

    pub fn operators(&self) -> &DiffOperators {
        &self.ops
    }

    pub fn plan(&self, b: BehavioralInput, bc: &BoundaryConditions) -> Result<EgoTrajectory> {
        let (s, d) = self.plan_positions(b, bc)?;
        EgoTrajectory::from_positions(s, d, self.dt)
    }

    /// Position samples of the plan without derivative post-processing.
    pub fn plan_positions(
        &self,
        b: BehavioralInput,
        bc: &BoundaryConditions,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        bc.validate()?;
        if !(b.b_d.is_finite() && b.b_v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "non-finite behavioral input {b:?}"
            )));
        }
        let h = self.horizon;
        let kp = self.gains.kappa_p;
        // Gradient of ‖A x + c·1‖² in x is 2Aᵀ(Ax + c·1).
        let q_s = 2.0 * kp * b.b_v * self.a_s.transpose() * DVector::from_element(h, 1.0);
        let q_d = 2.0 * kp * b.b_d * self.a_d.transpose() * DVector::from_element(h, 1.0);
        let e_s = DVector::from_row_slice(&[0.0, bc.v_x_init, bc.a_x_init]);
        let e_d = DVector::from_row_slice(&[bc.d_init, bc.v_y_init, bc.a_y_init, 0.0]);
        let s = self.s_qp.solve(&q_s, &e_s)?.x;
        let d = self.d_qp.solve(&q_d, &e_d)?.x;
        Ok((s.as_slice().to_vec(), d.as_slice().to_vec()))
    }
}

/// One-shot planning; builds (and discards) the factorizations.
pub fn frenet_plan(
    b: BehavioralInput,
    bc: &BoundaryConditions,
    gains: PlannerGains,
    horizon: usize,
    dt: f64,
) -> Result<EgoTrajectory> {
    FrenetPlanner::new(horizon, dt, gains)?.plan(b, bc)
}

/// Planner objective `Σ_k c_s + c_l + c_v` of an arbitrary trajectory.
pub fn planner_objective(traj: &EgoTrajectory, b: BehavioralInput, gains: PlannerGains) -> f64 {
    let mut total = 0.0;
    for k in 0..traj.horizon() {
        let (s_dot, s_ddot) = (traj.s_dot()[k], traj.s_ddot()[k]);
        let (d, d_dot, d_ddot) = (traj.d()[k], traj.d_dot()[k], traj.d_ddot()[k]);
        let smooth = s_ddot * s_ddot + d_ddot * d_ddot;
        let lateral = d_ddot - gains.kappa_p * (d - b.b_d) - gains.kappa_v * d_dot;
        let speed = s_ddot - gains.kappa_p * (s_dot - b.b_v);
        total += smooth + lateral * lateral + speed * speed;
    }
    total
}
