use super::{ControlTrace, CurvatureProfile, EgoTrajectory, VehicleParams, SINGULARITY_EPS};
use crate::{Error, Result};

/// Recover speed, acceleration, heading, heading rate and steering from a
/// position trajectory (differential flatness).
///
/// Acceleration and heading rate are forward differences; the last entry
/// repeats the previous one.
pub fn flat_controls(
    traj: &EgoTrajectory,
    kappa: &CurvatureProfile,
    params: &VehicleParams,
) -> Result<ControlTrace> {
    let h = traj.horizon();
    let dt = traj.dt();
    let (s, d, s_dot, d_dot) = (traj.s(), traj.d(), traj.s_dot(), traj.d_dot());

    let mut curv = Vec::with_capacity(h);
    let mut v = Vec::with_capacity(h);
    for k in 0..h {
        let kk = kappa.at(s[k]);
        let scale = 1.0 - d[k] * kk;
        if scale.abs() <= SINGULARITY_EPS {
            return Err(Error::Singularity {
                step: Some(k),
                value: scale,
            });
        }
        curv.push(kk);
        v.push(((s_dot[k] * scale).powi(2) + d_dot[k].powi(2)).sqrt());
    }
    if let Some(k) = v.iter().position(|&vk| vk == 0.0) {
        return Err(Error::ZeroSpeed(k));
    }
    let psi: Vec<f64> = (0..h).map(|k| d_dot[k].atan2(s_dot[k])).collect();
    let a = forward_difference(&v, dt);
    let psi_dot = forward_difference(&psi, dt);
    let theta = (0..h)
        .map(|k| ((psi_dot[k] + curv[k] * s_dot[k]) * params.wheelbase / v[k]).atan())
        .collect();
    Ok(ControlTrace {
        v,
        a,
        psi,
        psi_dot,
        theta,
    })
}

pub fn forward_difference(x: &[f64], dt: f64) -> Vec<f64> {
    let h = x.len();
    if h < 2 {
        return vec![0.0; h];
    }
    let mut out: Vec<f64> = x.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    out.push(out[h - 2]);
    out
}
