//! Finite-difference stencils over a uniformly sampled horizon.
//!
//! First derivative: central differences in the interior, second-order
//! one-sided differences at both ends. Second derivative: the three-point
//! stencil in the interior, reused from the adjacent interior point at both
//! ends. For `H = 2` the first derivative is the single forward difference
//! and the second derivative is zero.

use nalgebra::DMatrix;

pub fn first_derivative(x: &[f64], dt: f64) -> Vec<f64> {
    let h = x.len();
    match h {
        0 => vec![],
        1 => vec![0.0],
        2 => {
            let v = (x[1] - x[0]) / dt;
            vec![v, v]
        }
        _ => {
            let mut out = vec![0.0; h];
            out[0] = (-3.0 * x[0] + 4.0 * x[1] - x[2]) / (2.0 * dt);
            for k in 1..h - 1 {
                out[k] = (x[k + 1] - x[k - 1]) / (2.0 * dt);
            }
            out[h - 1] = (3.0 * x[h - 1] - 4.0 * x[h - 2] + x[h - 3]) / (2.0 * dt);
            out
        }
    }
}

pub fn second_derivative(x: &[f64], dt: f64) -> Vec<f64> {
    let h = x.len();
    if h < 3 {
        return vec![0.0; h];
    }
    let dt2 = dt * dt;
    let mut out = vec![0.0; h];
    for k in 1..h - 1 {
        out[k] = (x[k - 1] - 2.0 * x[k] + x[k + 1]) / dt2;
    }
    out[0] = out[1];
    out[h - 1] = out[h - 2];
    out
}

/// Dense matrix of a linear stencil, built by applying it to unit vectors so
/// the matrix form and the loop form cannot drift apart.
fn operator_matrix(h: usize, dt: f64, op: fn(&[f64], f64) -> Vec<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(h, h);
    let mut e = vec![0.0; h];
    for j in 0..h {
        e[j] = 1.0;
        let col = op(&e, dt);
        for i in 0..h {
            m[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    m
}

/// First- and second-derivative operators as matrices.
#[derive(Debug, Clone)]
pub struct DiffOperators {
    pub d1: DMatrix<f64>,
    pub d2: DMatrix<f64>,
}

impl DiffOperators {
    pub fn new(h: usize, dt: f64) -> Self {
        Self {
            d1: operator_matrix(h, dt, first_derivative),
            d2: operator_matrix(h, dt, second_derivative),
        }
    }
}
