use super::{CurvatureProfile, FrenetState, SINGULARITY_EPS};
use crate::{Error, Result};

/// One explicit-Euler step of the Frenet-frame kinematic bicycle model.
///
/// Positions, heading and speed integrate the state's current rates; the new
/// rates are then refreshed from the current speed, heading, offset and
/// steering:
///
/// ```text
/// s' = s + ṡ·dt        d' = d + ḋ·dt
/// ψ' = ψ + ψ̇·dt        v' = v + a·dt
/// ṡ' = v cosψ / (1 − dκ(s))
/// ḋ' = v sinψ
/// ψ̇' = v tanθ / B − κ(s) v cosψ / (1 − dκ(s))
/// ```
pub fn step_dynamics(
    x: &FrenetState,
    a: f64,
    theta: f64,
    kappa: &CurvatureProfile,
    dt: f64,
    wheelbase: f64,
) -> Result<FrenetState> {
    let k = kappa.at(x.s);
    let scale = 1.0 - x.d * k;
    if scale.abs() <= SINGULARITY_EPS {
        return Err(Error::Singularity {
            step: None,
            value: scale,
        });
    }
    let along = x.v * x.psi.cos() / scale;
    Ok(FrenetState {
        s: x.s + x.s_dot * dt,
        d: x.d + x.d_dot * dt,
        psi: x.psi + x.psi_dot * dt,
        v: x.v + a * dt,
        s_dot: along,
        d_dot: x.v * x.psi.sin(),
        psi_dot: x.v * theta.tan() / wheelbase - k * along,
    })
}

/// Apply `accel[k], steer[k]` for every `k`, returning all visited states
/// including the initial one.
pub fn rollout(
    initial: FrenetState,
    accel: &[f64],
    steer: &[f64],
    kappa: &CurvatureProfile,
    dt: f64,
    wheelbase: f64,
) -> Result<Vec<FrenetState>> {
    crate::error::ensure_dim(accel.len(), steer.len())?;
    let mut states = Vec::with_capacity(accel.len() + 1);
    states.push(initial);
    for (k, (&a, &th)) in accel.iter().zip(steer).enumerate() {
        let next = step_dynamics(&states[k], a, th, kappa, dt, wheelbase).map_err(|e| match e {
            Error::Singularity { value, .. } => Error::Singularity {
                step: Some(k),
                value,
            },
            other => other,
        })?;
        states.push(next);
    }
    Ok(states)
}
