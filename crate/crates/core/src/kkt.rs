//! Equality-constrained quadratic programs solved through their first-order
//! optimality (KKT) system.
//!
//! Solves `min ½ xᵀPx + qᵀx  s.t.  Cx = e` by factorizing
//!
//! ```text
//! [ P  Cᵀ ] [x]   [-q]
//! [ C  0  ] [ν] = [ e]
//! ```
//!
//! once; the factorization is reused for every `(q, e)` pair.

use nalgebra::{DMatrix, DVector, LU};

use crate::{Error, Result};

/// Pivot magnitude below which the KKT matrix is treated as singular,
/// relative to the largest entry.
const SINGULAR_RTOL: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct EqualityQp {
    n: usize,
    m: usize,
    hessian: DMatrix<f64>,
    constraints: DMatrix<f64>,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

/// Primal and dual solution of an [`EqualityQp`].
#[derive(Debug, Clone)]
pub struct KktSolution {
    pub x: DVector<f64>,
    pub multipliers: DVector<f64>,
}

impl EqualityQp {
    pub fn new(hessian: DMatrix<f64>, constraints: DMatrix<f64>) -> Result<Self> {
        let n = hessian.nrows();
        if hessian.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: hessian.ncols(),
            });
        }
        if constraints.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: constraints.ncols(),
            });
        }
        let m = constraints.nrows();
        let mut kkt = DMatrix::zeros(n + m, n + m);
        kkt.view_mut((0, 0), (n, n)).copy_from(&hessian);
        kkt.view_mut((n, 0), (m, n)).copy_from(&constraints);
        kkt.view_mut((0, n), (n, m))
            .copy_from(&constraints.transpose());

        let scale = kkt.amax().max(f64::MIN_POSITIVE);
        let lu = kkt.lu();
        let u = lu.u();
        let min_pivot = (0..n + m)
            .map(|i| u[(i, i)].abs())
            .fold(f64::INFINITY, f64::min);
        if !(min_pivot > SINGULAR_RTOL * scale) {
            return Err(Error::SingularSystem("equality-constrained QP"));
        }
        Ok(Self {
            n,
            m,
            hessian,
            constraints,
            lu,
        })
    }

    pub fn num_variables(&self) -> usize {
        self.n
    }

    pub fn num_constraints(&self) -> usize {
        self.m
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn constraints(&self) -> &DMatrix<f64> {
        &self.constraints
    }

    /// Solve for a linear term `q` and right-hand side `e`, with one step of
    /// iterative refinement.
    pub fn solve(&self, q: &DVector<f64>, e: &DVector<f64>) -> Result<KktSolution> {
        if q.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: q.len(),
            });
        }
        if e.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                found: e.len(),
            });
        }
        let mut rhs = DVector::zeros(self.n + self.m);
        rhs.rows_mut(0, self.n).copy_from(&(-q));
        rhs.rows_mut(self.n, self.m).copy_from(e);

        let mut z = self
            .lu
            .solve(&rhs)
            .ok_or(Error::SingularSystem("equality-constrained QP"))?;
        let residual = &rhs - self.apply(&z);
        if let Some(dz) = self.lu.solve(&residual) {
            z += dz;
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem("equality-constrained QP"));
        }
        Ok(KktSolution {
            x: z.rows(0, self.n).into_owned(),
            multipliers: z.rows(self.n, self.m).into_owned(),
        })
    }

    fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        let x = z.rows(0, self.n);
        let nu = z.rows(self.n, self.m);
        let mut out = DVector::zeros(self.n + self.m);
        out.rows_mut(0, self.n)
            .copy_from(&(&self.hessian * x + self.constraints.transpose() * nu));
        out.rows_mut(self.n, self.m)
            .copy_from(&(&self.constraints * x));
        out
    }

    /// `max(‖Px + q + Cᵀν‖∞, ‖Cx − e‖∞)`.
    pub fn kkt_residual(&self, sol: &KktSolution, q: &DVector<f64>, e: &DVector<f64>) -> f64 {
        let stat = &self.hessian * &sol.x + q + self.constraints.transpose() * &sol.multipliers;
        let prim = &self.constraints * &sol.x - e;
        stat.amax().max(prim.amax())
    }
}
