mod common;

use common::planner::*;
use common::*;
use nalgebra::DVector;
use proptest::prelude::*;
use riskplan::frenet::{
    frenet_plan, planner_objective, rollout, step_dynamics, BehavioralInput, BoundaryConditions,
    CurvatureProfile, EgoTrajectory, FrenetPlanner, FrenetState, PlannerGains, VehicleParams,
};

#[test]
fn plan_matches_nullspace_oracle_and_is_stationary() {
    let mut r = rng(101);
    let mut worst_bc = 0.0f64;
    let mut worst_stat = 0.0f64;
    for _ in 0..100 {
        let (b, bc, gains, h, dt) = random_instance(&mut r);
        let traj = frenet_plan(b, &bc, gains, h, dt).unwrap();
        let o = oracle(h, dt, gains, b, &bc);
        let xs = DVector::from_column_slice(traj.s());
        let xd = DVector::from_column_slice(traj.d());

        worst_bc = worst_bc.max(bc.residual(&traj));
        worst_stat = worst_stat.max(stationarity(&o.p_s, &o.q_s, &o.c_s, &xs));
        worst_stat = worst_stat.max(stationarity(&o.p_d, &o.q_d, &o.c_d, &xd));

        let ref_s = nullspace_qp(&o.p_s, &o.q_s, &o.c_s, &o.e_s);
        let ref_d = nullspace_qp(&o.p_d, &o.q_d, &o.c_d, &o.e_d);
        let scale = 1.0 + ref_s.amax().max(ref_d.amax());
        assert!(
            (&xs - &ref_s).amax() <= 1e-6 * scale,
            "s disagrees with oracle (h={h}, dt={dt})"
        );
        assert!(
            (&xd - &ref_d).amax() <= 1e-6 * scale,
            "d disagrees with oracle (h={h}, dt={dt})"
        );

        // The oracle optimum must not beat the planner on the planner's own objective.
        let oracle_traj =
            EgoTrajectory::from_positions(ref_s.as_slice().to_vec(), ref_d.as_slice().to_vec(), dt)
                .unwrap();
        let (jp, jo) = (
            planner_objective(&traj, b, gains),
            planner_objective(&oracle_traj, b, gains),
        );
        assert!(
            jp <= jo + 1e-6 * (1.0 + jo.abs()),
            "planner {jp} > oracle {jo}"
        );
    }
    assert!(worst_bc <= 1e-8, "boundary residual {worst_bc}");
    assert!(worst_stat <= 1e-8, "stationarity {worst_stat}");
}

#[test]
fn lane_keep_at_setpoint_has_zero_objective() {
    let bc = BoundaryConditions::new(4.0, 1.5);
    let b = BehavioralInput::new(1.5, 4.0).unwrap();
    let gains = PlannerGains::default();
    let traj = frenet_plan(b, &bc, gains, 40, 0.1).unwrap();
    assert!(planner_objective(&traj, b, gains).abs() < 1e-10);
    for k in 0..40 {
        assert!((traj.s()[k] - 0.4 * k as f64).abs() < 1e-9);
        assert!((traj.d()[k] - 1.5).abs() < 1e-9);
    }
}

#[test]
fn lateral_tail_approaches_setpoint_monotonically() {
    let bc = BoundaryConditions::new(5.0, 0.0);
    let b = BehavioralInput::new(3.5, 5.0).unwrap();
    let traj = frenet_plan(b, &bc, PlannerGains::default(), 100, 0.1).unwrap();
    let d = traj.d();
    for k in 60..99 {
        assert!(d[k + 1] >= d[k] - 1e-12, "tail not monotone at {k}");
        assert!(d[k] < 3.5);
    }
    assert!((3.5 - d[99]) < (3.5 - d[60]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plan_is_affine_in_behavior(bd1 in -2.0f64..5.0, bv1 in 0.0f64..10.0,
                                  bd2 in -2.0f64..5.0, bv2 in 0.0f64..10.0,
                                  alpha in 0.0f64..1.0) {
        let bc = BoundaryConditions { v_x_init: 3.0, a_x_init: 0.5, d_init: 0.2, v_y_init: -0.1, a_y_init: 0.0 };
        let planner = FrenetPlanner::new(30, 0.1, PlannerGains::default()).unwrap();
        let p1 = planner.plan(BehavioralInput::new(bd1, bv1).unwrap(), &bc).unwrap();
        let p2 = planner.plan(BehavioralInput::new(bd2, bv2).unwrap(), &bc).unwrap();
        let mix = BehavioralInput::new(alpha * bd1 + (1.0 - alpha) * bd2, alpha * bv1 + (1.0 - alpha) * bv2).unwrap();
        let pm = planner.plan(mix, &bc).unwrap();
        for k in 0..30 {
            let s = alpha * p1.s()[k] + (1.0 - alpha) * p2.s()[k];
            let d = alpha * p1.d()[k] + (1.0 - alpha) * p2.d()[k];
            prop_assert!((pm.s()[k] - s).abs() <= 1e-9 * (1.0 + s.abs()));
            prop_assert!((pm.d()[k] - d).abs() <= 1e-9 * (1.0 + d.abs()));
        }
    }

    #[test]
    fn derivative_fields_match_stencils(bd in -2.0f64..5.0, bv in 0.5f64..10.0) {
        let traj = frenet_plan(BehavioralInput::new(bd, bv).unwrap(), &BoundaryConditions::new(3.0, 0.0),
                               PlannerGains::default(), 25, 0.1).unwrap();
        let rebuilt = EgoTrajectory::with_derivatives(
            0.1, traj.s().to_vec(), traj.d().to_vec(),
            traj.s_dot().to_vec(), traj.d_dot().to_vec(), traj.s_ddot().to_vec(), traj.d_ddot().to_vec());
        prop_assert!(rebuilt.is_ok());
    }
}

#[test]
fn flatness_round_trip_straight_and_constant_curvature() {
    let (h, dt) = (50usize, 0.1);
    let tol = 1e-3 * h as f64 * dt;
    let s: Vec<f64> = (0..h).map(|k| 4.0 * k as f64 * dt).collect();
    for (kappa, d0) in [
        (CurvatureProfile::Zero, 0.0),
        (CurvatureProfile::Constant { kappa: 0.05 }, 0.0),
        (CurvatureProfile::Constant { kappa: 0.05 }, 1.0),
    ] {
        let traj = EgoTrajectory::from_positions(s.clone(), vec![d0; h], dt).unwrap();
        let err = round_trip_error(&traj, &kappa);
        assert!(
            err <= tol,
            "{kappa:?} d={d0}: round-trip error {err} > {tol}"
        );
    }
}

#[test]
fn step_dynamics_examples() {
    let params = VehicleParams::default();
    let x =
        FrenetState::with_consistent_rates(0.0, 0.0, 0.0, 1.0, &CurvatureProfile::Zero).unwrap();
    let n = step_dynamics(&x, 0.0, 0.0, &CurvatureProfile::Zero, 0.1, params.wheelbase).unwrap();
    assert!((n.s - 0.1).abs() < 1e-15 && n.d == 0.0 && n.psi == 0.0);
    assert!((n.s_dot - 1.0).abs() < 1e-15 && n.d_dot == 0.0 && n.psi_dot == 0.0);

    let x =
        FrenetState::with_consistent_rates(0.0, 0.0, 0.0, 2.0, &CurvatureProfile::Zero).unwrap();
    let n = step_dynamics(&x, 1.0, 0.0, &CurvatureProfile::Zero, 0.1, params.wheelbase).unwrap();
    assert!((n.v - 2.1).abs() < 1e-15);

    let kappa = CurvatureProfile::Constant { kappa: 0.1 };
    let x = FrenetState::with_consistent_rates(0.0, 0.0, 0.0, 1.0, &kappa).unwrap();
    let theta = (0.1 * params.wheelbase).atan();
    let n = step_dynamics(&x, 0.0, theta, &kappa, 0.1, params.wheelbase).unwrap();
    assert!(n.psi_dot.abs() < 1e-12);
}

#[test]
fn step_dynamics_is_first_order() {
    // Halving dt twice over a fixed interval should roughly halve the error
    // against a very fine reference.
    let params = VehicleParams::default();
    let kappa = CurvatureProfile::Constant { kappa: 0.05 };
    let x0 = FrenetState::with_consistent_rates(0.0, 0.3, 0.05, 4.0, &kappa).unwrap();
    let run = |steps: usize| {
        let dt = 1.0 / steps as f64;
        let a = vec![0.5; steps];
        let th = vec![0.08; steps];
        *rollout(x0, &a, &th, &kappa, dt, params.wheelbase)
            .unwrap()
            .last()
            .unwrap()
    };
    let reference = run(1 << 16);
    let err = |x: FrenetState| {
        (x.s - reference.s).abs() + (x.d - reference.d).abs() + (x.psi - reference.psi).abs()
    };
    let (e1, e2) = (err(run(64)), err(run(128)));
    let ratio = e1 / e2;
    assert!((1.7..2.3).contains(&ratio), "error ratio {ratio}");
}

#[test]
fn singularity_reports_step() {
    let kappa = CurvatureProfile::Constant { kappa: 1.0 };
    let x = FrenetState {
        s: 0.0,
        d: 1.0,
        psi: 0.0,
        v: 1.0,
        s_dot: 1.0,
        d_dot: 0.0,
        psi_dot: 0.0,
    };
    assert!(step_dynamics(&x, 0.0, 0.0, &kappa, 0.1, 2.5).is_err());
}
