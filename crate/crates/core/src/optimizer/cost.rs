use serde::{Deserialize, Serialize};

use crate::frenet::{flat_controls, CurvatureProfile, EgoTrajectory, VehicleParams};
use crate::Result;

/// Weights of the smoothness/tracking cost.
///
/// `w_theta[0]` weighs the steering-limit hinge, `w_theta[1..4]` the squared
/// steering angle and its first and second differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub w_theta: [f64; 4],
    pub v_des: f64,
    pub d_des: f64,
    pub w_velocity: f64,
    pub w_accel: f64,
    pub w_lane: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            w_theta: [1.0, 1.0, 0.1, 0.01],
            v_des: 5.0,
            d_des: 0.0,
            w_velocity: 1.0,
            w_accel: 1.0,
            w_lane: 1.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.w_theta[0],
            self.w_theta[1],
            self.w_theta[2],
            self.w_theta[3],
            self.w_velocity,
            self.w_accel,
            self.w_lane,
        ];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(crate::Error::InvalidConfig(
                "cost weights must be finite and non-negative".into(),
            ));
        }
        if !(self.v_des.is_finite() && self.d_des.is_finite()) {
            return Err(crate::Error::InvalidConfig(
                "non-finite tracking setpoint".into(),
            ));
        }
        Ok(())
    }
}

/// Steering, speed-tracking, acceleration and lane-keeping cost of a
/// trajectory. Steering derivatives are forward differences.
pub fn smoothness_cost(
    traj: &EgoTrajectory,
    kappa: &CurvatureProfile,
    params: &VehicleParams,
    w: &CostWeights,
) -> Result<f64> {
    let controls = flat_controls(traj, kappa, params)?;
    let dt = traj.dt();
    let theta = &controls.theta;
    let theta_dot = crate::frenet::forward_difference(theta, dt);
    let theta_ddot = crate::frenet::forward_difference(&theta_dot, dt);

    let hinge: f64 = theta
        .iter()
        .map(|t| (t.abs() - params.theta_max).max(0.0))
        .sum();
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let c_theta = w.w_theta[0] * hinge
        + w.w_theta[1] * sq(theta)
        + w.w_theta[2] * sq(&theta_dot)
        + w.w_theta[3] * sq(&theta_ddot);
    let c_v: f64 = traj.s_dot().iter().map(|v| (v - w.v_des).powi(2)).sum();
    let c_a: f64 = sq(traj.s_ddot()) + sq(traj.d_ddot());
    let c_lane: f64 = traj.d().iter().map(|d| (d - w.d_des).powi(2)).sum();
    Ok(c_theta + w.w_velocity * c_v + w.w_accel * c_a + w.w_lane * c_lane)
}
