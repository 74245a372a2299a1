//! Best-effort projection of a trajectory onto the lane, speed and
//! acceleration limits while keeping the boundary conditions exact.
//!
//! Each sweep clamps `d` into the lane band, rescales over-limit
//! forward-difference velocities and accelerations and re-integrates them,
//! then applies the minimum-norm correction `x ← x − Cᵀ(CCᵀ)⁻¹(Cx − e)` that
//! restores the linear boundary conditions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::frenet::{BoundaryConditions, DiffOperators, EgoTrajectory};
use crate::{Error, Result};

/// Equality residuals below this are left alone so feasible inputs are
/// returned unchanged.
const EQUALITY_SKIP_TOL: f64 = 1e-12;

/// Lane band and motion limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub d_min: f64,
    pub d_max: f64,
    pub v_max: f64,
    pub a_max: f64,
}

impl Default for ConstraintSpec {
    fn default() -> Self {
        Self {
            d_min: -1.75,
            d_max: 5.25,
            v_max: 15.0,
            a_max: 6.0,
        }
    }
}

impl ConstraintSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_min < self.d_max) {
            return Err(Error::InvalidConfig(format!(
                "d_min {} must be below d_max {}",
                self.d_min, self.d_max
            )));
        }
        if !(self.v_max > 0.0 && self.a_max > 0.0) {
            return Err(Error::InvalidConfig(
                "v_max and a_max must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `‖max(0, g)‖₂` over lane, speed and acceleration constraints, with
/// derivatives taken from the trajectory's stencils.
pub fn inequality_residual(traj: &EgoTrajectory, cons: &ConstraintSpec) -> f64 {
    let mut sum = 0.0;
    let mut add = |g: f64| {
        if g > 0.0 {
            sum += g * g;
        }
    };
    for k in 0..traj.horizon() {
        let d = traj.d()[k];
        add(d - cons.d_max);
        add(cons.d_min - d);
        add(traj.s_dot()[k].hypot(traj.d_dot()[k]) - cons.v_max);
        add(traj.s_ddot()[k].hypot(traj.d_ddot()[k]) - cons.a_max);
    }
    sum.sqrt()
}

/// Boundary-condition rows of one axis with the cached `Cᵀ(CCᵀ)⁻¹`.
#[derive(Debug, Clone)]
struct EqualityCorrection {
    c: DMatrix<f64>,
    gain: DMatrix<f64>,
}

impl EqualityCorrection {
    fn new(c: DMatrix<f64>) -> Result<Self> {
        let cct = &c * c.transpose();
        let inv = cct
            .try_inverse()
            .ok_or(Error::SingularSystem("boundary-condition rows"))?;
        Ok(Self {
            gain: c.transpose() * inv,
            c,
        })
    }

    fn apply(&self, x: &mut [f64], e: &[f64]) {
        let xv = DVector::from_column_slice(x);
        let r = &self.c * &xv - DVector::from_column_slice(e);
        if r.amax() <= EQUALITY_SKIP_TOL {
            return;
        }
        let fixed = xv - &self.gain * r;
        x.copy_from_slice(fixed.as_slice());
    }
}

/// Projection operator for a fixed horizon, step and limit set.
#[derive(Debug, Clone)]
pub struct Projector {
    horizon: usize,
    dt: f64,
    cons: ConstraintSpec,
    s_eq: EqualityCorrection,
    d_eq: EqualityCorrection,
}

/// Projected trajectory with its remaining inequality residual after each
/// sweep.
#[derive(Debug, Clone)]
pub struct Projection {
    pub trajectory: EgoTrajectory,
    pub residual: f64,
    pub sweep_residuals: Vec<f64>,
}

impl Projector {
    pub fn new(horizon: usize, dt: f64, cons: ConstraintSpec) -> Result<Self> {
        cons.validate()?;
        if horizon < 5 {
            return Err(Error::OutOfRange(format!(
                "projection horizon {horizon} < 5"
            )));
        }
        let ops = DiffOperators::new(horizon, dt);
        let mut c_s = DMatrix::zeros(3, horizon);
        c_s[(0, 0)] = 1.0;
        c_s.row_mut(1).copy_from(&ops.d1.row(0));
        c_s.row_mut(2).copy_from(&ops.d2.row(0));
        let mut c_d = DMatrix::zeros(4, horizon);
        c_d[(0, 0)] = 1.0;
        c_d.row_mut(1).copy_from(&ops.d1.row(0));
        c_d.row_mut(2).copy_from(&ops.d2.row(0));
        c_d.row_mut(3).copy_from(&ops.d1.row(horizon - 1));
        Ok(Self {
            horizon,
            dt,
            cons,
            s_eq: EqualityCorrection::new(c_s)?,
            d_eq: EqualityCorrection::new(c_d)?,
        })
    }

    pub fn constraints(&self) -> &ConstraintSpec {
        &self.cons
    }

    pub fn project(
        &self,
        traj: &EgoTrajectory,
        bc: &BoundaryConditions,
        iters: usize,
    ) -> Result<Projection> {
        if iters < 1 {
            return Err(Error::InvalidConfig(
                "projection needs at least one sweep".into(),
            ));
        }
        crate::error::ensure_dim(self.horizon, traj.horizon())?;
        let initial = inequality_residual(traj, &self.cons);
        if initial == 0.0 && bc.residual(traj) <= EQUALITY_SKIP_TOL {
            return Ok(Projection {
                trajectory: traj.clone(),
                residual: 0.0,
                sweep_residuals: vec![0.0; iters],
            });
        }
        let e_s = [0.0, bc.v_x_init, bc.a_x_init];
        let e_d = [bc.d_init, bc.v_y_init, bc.a_y_init, 0.0];
        let mut s = traj.s().to_vec();
        let mut d = traj.d().to_vec();
        let mut current = traj.clone();
        let mut sweep_residuals = Vec::with_capacity(iters);
        for _ in 0..iters {
            for v in d.iter_mut() {
                *v = v.clamp(self.cons.d_min, self.cons.d_max);
            }
            if current
                .s_dot()
                .iter()
                .zip(current.d_dot())
                .any(|(a, b)| a.hypot(*b) > self.cons.v_max)
            {
                self.limit_velocity(&mut s, &mut d);
            }
            if current
                .s_ddot()
                .iter()
                .zip(current.d_ddot())
                .any(|(a, b)| a.hypot(*b) > self.cons.a_max)
            {
                self.limit_acceleration(&mut s, &mut d);
            }
            self.s_eq.apply(&mut s, &e_s);
            self.d_eq.apply(&mut d, &e_d);
            current = EgoTrajectory::from_positions(s.clone(), d.clone(), self.dt)?;
            let r = inequality_residual(&current, &self.cons);
            sweep_residuals.push(r);
            if r == 0.0 {
                break;
            }
        }
        let residual = *sweep_residuals.last().unwrap();
        Ok(Projection {
            trajectory: current,
            residual,
            sweep_residuals,
        })
    }

    fn limit_velocity(&self, s: &mut [f64], d: &mut [f64]) {
        let dt = self.dt;
        let h = s.len();
        let mut us: Vec<f64> = (0..h - 1).map(|k| (s[k + 1] - s[k]) / dt).collect();
        let mut ud: Vec<f64> = (0..h - 1).map(|k| (d[k + 1] - d[k]) / dt).collect();
        for k in 0..h - 1 {
            let norm = us[k].hypot(ud[k]);
            if norm > self.cons.v_max {
                let f = self.cons.v_max / norm;
                us[k] *= f;
                ud[k] *= f;
            }
        }
        for k in 0..h - 1 {
            s[k + 1] = s[k] + us[k] * dt;
            d[k + 1] = d[k] + ud[k] * dt;
        }
    }

    fn limit_acceleration(&self, s: &mut [f64], d: &mut [f64]) {
        let dt2 = self.dt * self.dt;
        let h = s.len();
        let second = |x: &[f64], k: usize| (x[k + 2] - 2.0 * x[k + 1] + x[k]) / dt2;
        let mut as_: Vec<f64> = (0..h - 2).map(|k| second(s, k)).collect();
        let mut ad: Vec<f64> = (0..h - 2).map(|k| second(d, k)).collect();
        for k in 0..h - 2 {
            let norm = as_[k].hypot(ad[k]);
            if norm > self.cons.a_max {
                let f = self.cons.a_max / norm;
                as_[k] *= f;
                ad[k] *= f;
            }
        }
        for k in 0..h - 2 {
            s[k + 2] = 2.0 * s[k + 1] - s[k] + as_[k] * dt2;
            d[k + 2] = 2.0 * d[k + 1] - d[k] + ad[k] * dt2;
        }
    }
}

/// One-shot projection; see [`Projector`].
pub fn project(
    traj: &EgoTrajectory,
    bc: &BoundaryConditions,
    cons: &ConstraintSpec,
    iters: usize,
) -> Result<(EgoTrajectory, f64)> {
    let p = Projector::new(traj.horizon(), traj.dt(), *cons)?.project(traj, bc, iters)?;
    Ok((p.trajectory, p.residual))
}
