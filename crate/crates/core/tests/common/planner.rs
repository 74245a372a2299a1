//! Dense reference for the behavioral planner and the flatness round trip.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use riskplan::frenet::{
    first_derivative, flat_controls, rollout, second_derivative, BehavioralInput,
    BoundaryConditions, CurvatureProfile, EgoTrajectory, FrenetState, PlannerGains, VehicleParams,
};

use super::{null_space, operator};

/// Behavioral-planner objective in matrix form for one axis:
/// `‖D2 x‖² + ‖A x − c‖²`, returned as `(P, q)` for `½xᵀPx + qᵀx`.
fn axis_qp(h: usize, dt: f64, a: &DMatrix<f64>, c: f64) -> (DMatrix<f64>, DVector<f64>) {
    let d2 = operator(h, dt, second_derivative);
    let p = 2.0 * (d2.transpose() * &d2 + a.transpose() * a);
    let q = -2.0 * a.transpose() * DVector::from_element(h, c);
    (p, q)
}

pub struct Oracle {
    pub p_s: DMatrix<f64>,
    pub q_s: DVector<f64>,
    pub c_s: DMatrix<f64>,
    pub e_s: DVector<f64>,
    pub p_d: DMatrix<f64>,
    pub q_d: DVector<f64>,
    pub c_d: DMatrix<f64>,
    pub e_d: DVector<f64>,
}

pub fn oracle(
    h: usize,
    dt: f64,
    g: PlannerGains,
    b: BehavioralInput,
    bc: &BoundaryConditions,
) -> Oracle {
    let d1 = operator(h, dt, first_derivative);
    let d2 = operator(h, dt, second_derivative);
    let eye = DMatrix::<f64>::identity(h, h);
    // Speed tracking: s̈ − κp(ṡ − b_v); lateral: d̈ − κp(d − b_d) − κv ḋ.
    let (p_s, q_s) = axis_qp(h, dt, &(&d2 - g.kappa_p * &d1), -g.kappa_p * b.b_v);
    let (p_d, q_d) = axis_qp(
        h,
        dt,
        &(&d2 - g.kappa_p * &eye - g.kappa_v * &d1),
        -g.kappa_p * b.b_d,
    );
    let mut c_s = DMatrix::zeros(3, h);
    c_s[(0, 0)] = 1.0;
    c_s.set_row(1, &d1.row(0));
    c_s.set_row(2, &d2.row(0));
    let e_s = DVector::from_vec(vec![0.0, bc.v_x_init, bc.a_x_init]);
    let mut c_d = DMatrix::zeros(4, h);
    c_d[(0, 0)] = 1.0;
    c_d.set_row(1, &d1.row(0));
    c_d.set_row(2, &d2.row(0));
    c_d.set_row(3, &d1.row(h - 1));
    let e_d = DVector::from_vec(vec![bc.d_init, bc.v_y_init, bc.a_y_init, 0.0]);
    Oracle {
        p_s,
        q_s,
        c_s,
        e_s,
        p_d,
        q_d,
        c_d,
        e_d,
    }
}

/// Projected gradient norm, relative to the magnitude of the terms that cancel.
pub fn stationarity(p: &DMatrix<f64>, q: &DVector<f64>, c: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let z = null_space(c);
    let grad = p * x + q;
    let scale = (p * x).norm() + q.norm() + 1.0;
    (z.transpose() * grad).norm() / scale
}

pub fn random_instance(
    r: &mut impl Rng,
) -> (
    BehavioralInput,
    BoundaryConditions,
    PlannerGains,
    usize,
    f64,
) {
    let b = BehavioralInput::new(r.random_range(-2.0..5.0), r.random_range(0.0..12.0)).unwrap();
    let bc = BoundaryConditions {
        v_x_init: r.random_range(0.5..10.0),
        a_x_init: r.random_range(-2.0..2.0),
        d_init: r.random_range(-1.5..5.0),
        v_y_init: r.random_range(-1.0..1.0),
        a_y_init: r.random_range(-1.0..1.0),
    };
    let gains = PlannerGains::critically_damped(r.random_range(0.3..3.0));
    let h = r.random_range(5..60);
    let dt = r.random_range(0.05..0.2);
    (b, bc, gains, h, dt)
}

/// Largest position error after re-simulating the flat controls.
pub fn round_trip_error(traj: &EgoTrajectory, kappa: &CurvatureProfile) -> f64 {
    let params = VehicleParams::default();
    let c = flat_controls(traj, kappa, &params).unwrap();
    let h = traj.horizon();
    let init =
        FrenetState::with_consistent_rates(traj.s()[0], traj.d()[0], c.psi[0], c.v[0], kappa)
            .unwrap();
    let states = rollout(
        init,
        &c.a[..h - 1],
        &c.theta[..h - 1],
        kappa,
        traj.dt(),
        params.wheelbase,
    )
    .unwrap();
    (0..h)
        .map(|k| {
            (states[k].s - traj.s()[k])
                .abs()
                .max((states[k].d - traj.d()[k]).abs())
        })
        .fold(0.0, f64::max)
}
