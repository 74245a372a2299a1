//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the library's numerical code paths.

#![allow(dead_code)]

pub mod planner;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn laplace(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    let l1: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    (-l1 / sigma).exp()
}

/// Weighted squared MMD by the literal triple double sum.
pub fn brute_mmd(a: &[Vec<f64>], wa: &[f64], b: &[Vec<f64>], wb: &[f64], sigma: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            total += wa[i] * wa[j] * laplace(&a[i], &a[j], sigma);
        }
    }
    for i in 0..a.len() {
        for j in 0..b.len() {
            total -= 2.0 * wa[i] * wb[j] * laplace(&a[i], &b[j], sigma);
        }
    }
    for i in 0..b.len() {
        for j in 0..b.len() {
            total += wb[i] * wb[j] * laplace(&b[i], &b[j], sigma);
        }
    }
    total
}

/// Orthonormal basis of the null space of `c` (rows are constraints), from
/// the full SVD of `cᵀ c`.
pub fn null_space(c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = c.ncols();
    let ctc = c.transpose() * c;
    let eig = nalgebra::SymmetricEigen::new(ctc);
    let scale = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| eig.eigenvalues[i].abs() <= 1e-10 * scale)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    DMatrix::from_columns(&cols)
}

/// Minimum-norm particular solution of `c x = e` via the normal equations of
/// `c cᵀ` (full row rank assumed).
pub fn particular(c: &DMatrix<f64>, e: &DVector<f64>) -> DVector<f64> {
    let cct = c * c.transpose();
    let y = cct
        .lu()
        .solve(e)
        .expect("constraints must have full row rank");
    c.transpose() * y
}

/// Minimize `½ xᵀ P x + qᵀ x` subject to `C x = e` by reducing to the null
/// space of `C`. Independent of the KKT path used in the library.
pub fn nullspace_qp(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    c: &DMatrix<f64>,
    e: &DVector<f64>,
) -> DVector<f64> {
    let x0 = particular(c, e);
    let z = null_space(c);
    if z.ncols() == 0 {
        return x0;
    }
    let h = z.transpose() * p * &z;
    let g = z.transpose() * (p * &x0 + q);
    let y = h
        .cholesky()
        .expect("reduced Hessian must be positive definite")
        .solve(&(-g));
    x0 + z * y
}

/// Dense derivative operator built from a stencil applied to unit vectors.
pub fn operator(h: usize, dt: f64, f: fn(&[f64], f64) -> Vec<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(h, h);
    for j in 0..h {
        let mut e = vec![0.0; h];
        e[j] = 1.0;
        let col = f(&e, dt);
        for i in 0..h {
            m[(i, j)] = col[i];
        }
    }
    m
}

pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-scale..scale)).collect())
        .collect()
}

pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

/// Empirical upper-tail mean of the `m` largest values.
pub fn top_m_mean(values: &[f64], m: usize) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v[..m].iter().sum::<f64>() / m as f64
}

/// Median of a sample, by full sort.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Type-7 quantile by full sort.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Embedding gap of weights `beta` on `indices`, by brute force.
pub fn brute_gap(rows: &[Vec<f64>], indices: &[usize], beta: &[f64], sigma: f64) -> f64 {
    let full_w = vec![1.0 / rows.len() as f64; rows.len()];
    let sub: Vec<Vec<f64>> = indices.iter().map(|&i| rows[i].clone()).collect();
    brute_mmd(rows, &full_w, &sub, beta, sigma)
}

/// Weight problem solved in the null space of `1ᵀ`.
pub fn oracle_weights(rows: &[Vec<f64>], indices: &[usize], sigma: f64) -> Vec<f64> {
    let m = indices.len();
    let k = DMatrix::from_fn(m, m, |a, b| {
        laplace(&rows[indices[a]], &rows[indices[b]], sigma)
    });
    let b = DVector::from_fn(m, |l, _| {
        rows.iter()
            .map(|r| laplace(&rows[indices[l]], r, sigma))
            .sum::<f64>()
            / rows.len() as f64
    });
    let x = nullspace_qp(
        &(2.0 * k),
        &(-2.0 * b),
        &DMatrix::from_element(1, m, 1.0),
        &DVector::from_element(1, 1.0),
    );
    x.as_slice().to_vec()
}
