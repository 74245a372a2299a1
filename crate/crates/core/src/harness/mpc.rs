//! Receding-horizon driver: plan, apply the first control, advance the
//! obstacle predictions by one step, repeat.

use std::time::Instant;

use serde::Serialize;

use super::{optimizer_inputs, RunSettings, Variant};
use crate::frenet::{flat_controls, step_dynamics, BoundaryConditions, FrenetState};
use crate::optimizer::{Optimizer, OptimizerConfig};
use crate::risk::RiskTag;
use crate::rng::derive_seed;
use crate::scenario::ScenarioSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct MpcCycle {
    pub cycle: usize,
    /// Ego state at the start of the cycle, `s` in the global frame.
    pub state: FrenetState,
    pub behavior: [f64; 2],
    pub accel: f64,
    pub steer: f64,
    pub risk: f64,
    /// Planned positions, global frame.
    pub plan_s: Vec<f64>,
    pub plan_d: Vec<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MpcLog {
    pub scenario: String,
    pub risk: RiskTag,
    pub seed: u64,
    pub cycles: Vec<MpcCycle>,
    pub final_state: FrenetState,
}

/// Drive `cycles` planning cycles of `spec` for `seed`.
///
/// The plan always starts at `s = 0`, so obstacle samples are re-expressed
/// relative to the ego's travelled distance each cycle.
pub fn mpc_drive(
    spec: &ScenarioSpec,
    seed: u64,
    cycles: usize,
    tag: RiskTag,
    n_prime: usize,
    settings: &RunSettings,
) -> Result<MpcLog> {
    settings.validate()?;
    let mut scene = spec.instantiate(seed)?;
    let problem = scene.problem.clone();
    let opt_cfg = OptimizerConfig {
        horizon: spec.horizon,
        dt: spec.dt,
        gains: spec.gains,
        ..settings.optimizer.clone()
    };
    let mut optimizer = Optimizer::new(opt_cfg.clone(), problem.clone())?;
    let bc0 = problem.bc;
    let mut state =
        FrenetState::with_consistent_rates(0.0, bc0.d_init, 0.0, bc0.v_x_init, &problem.curvature)?;
    let (mut a_x, mut a_y) = (bc0.a_x_init, bc0.a_y_init);
    let all_optimization = scene.optimization.clone();
    let mut log = Vec::with_capacity(cycles);

    for cycle in 0..cycles {
        let t0 = Instant::now();
        let bc = BoundaryConditions {
            v_x_init: state.s_dot,
            a_x_init: a_x,
            d_init: state.d,
            v_y_init: state.d_dot,
            a_y_init: a_y,
        };
        optimizer.set_boundary_conditions(bc)?;
        let origin = state.s;
        scene.optimization = all_optimization
            .iter()
            .map(|o| o.shifted(cycle).translated(-origin, 0.0))
            .collect();
        scene.seed = derive_seed(seed, &[cycle as u64]);

        let plan = if scene.optimization.is_empty() {
            optimizer.plan(&[], tag)?
        } else {
            let (inputs, _) = optimizer_inputs(&scene, tag, n_prime, Variant::Standard, settings)?;
            optimizer.plan(&inputs, tag)?
        };
        let traj = &plan.best_trajectory;
        let controls = flat_controls(traj, &problem.curvature, &problem.vehicle)?;
        let (accel, steer) = (controls.a[0], controls.theta[0]);
        let next = step_dynamics(
            &state,
            accel,
            steer,
            &problem.curvature,
            spec.dt,
            problem.vehicle.wheelbase,
        )?;
        if next.v < 0.0 {
            return Err(Error::Degenerate(format!(
                "negative speed after cycle {cycle}"
            )));
        }
        a_x = traj.s_ddot()[1];
        a_y = traj.d_ddot()[1];

        log.push(MpcCycle {
            cycle,
            state,
            behavior: plan.best_input.as_array(),
            accel,
            steer,
            risk: plan.best_risk,
            plan_s: traj.s().iter().map(|s| s + origin).collect(),
            plan_d: traj.d().to_vec(),
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        });
        state = next;
    }
    Ok(MpcLog {
        scenario: spec.name.clone(),
        risk: tag,
        seed,
        cycles: log,
        final_state: state,
    })
}
