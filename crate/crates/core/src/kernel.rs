//! Laplace kernel, kernel matrices and squared maximum mean discrepancy.
//!
//! All embeddings are finite weighted sums `Σ wᵢ φ(zᵢ)`, so every squared RKHS
//! distance reduces to quadratic forms in kernel matrices:
//!
//! ```text
//! ‖μ_A − μ_B‖² = wᴬᵀK_AA wᴬ − 2 wᴬᵀK_AB wᴮ + wᴮᵀK_BB wᴮ
//! ```

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ensure_dim;
use crate::{Error, Result};

/// Tolerance on `Σ w = 1` for weighted sample sets.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Above this many residuals [`mmd_to_dirac`] switches from the dense double
/// sum to the sorted O(N log N) evaluation.
const DENSE_DIRAC_LIMIT: usize = 256;

/// Bandwidth of the Laplace kernel `exp(−‖z − z′‖₁ / σ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelConfig")]
pub struct KernelConfig {
    sigma: f64,
}

#[derive(Deserialize)]
struct RawKernelConfig {
    sigma: f64,
}

impl TryFrom<RawKernelConfig> for KernelConfig {
    type Error = Error;

    fn try_from(raw: RawKernelConfig) -> Result<Self> {
        KernelConfig::new(raw.sigma)
    }
}

impl KernelConfig {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma.is_finite() && sigma > 0.0 {
            Ok(Self { sigma })
        } else {
            Err(Error::InvalidBandwidth(sigma))
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Kernel value for a precomputed L1 distance.
    #[inline]
    pub fn from_distance(&self, l1: f64) -> f64 {
        (-l1 / self.sigma).exp()
    }
}

/// `‖a − b‖₁` without dimension checks.
#[inline]
pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn laplace_kernel(z: &[f64], z2: &[f64], cfg: KernelConfig) -> Result<f64> {
    ensure_dim(z.len(), z2.len())?;
    Ok(cfg.from_distance(l1_distance(z, z2)))
}

/// Kernel matrix with entry `(i, j) = K(xᵢ, yⱼ)`.
pub fn kernel_matrix<X, Y>(xs: &[X], ys: &[Y], cfg: KernelConfig) -> Result<DMatrix<f64>>
where
    X: AsRef<[f64]> + Sync,
    Y: AsRef<[f64]> + Sync,
{
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::Empty("kernel matrix operand"));
    }
    let dim = xs[0].as_ref().len();
    for v in xs
        .iter()
        .map(AsRef::as_ref)
        .chain(ys.iter().map(AsRef::as_ref))
    {
        ensure_dim(dim, v.len())?;
    }
    let rows: Vec<Vec<f64>> = xs
        .par_iter()
        .map(|x| {
            ys.iter()
                .map(|y| cfg.from_distance(l1_distance(x.as_ref(), y.as_ref())))
                .collect()
        })
        .collect();
    Ok(DMatrix::from_fn(xs.len(), ys.len(), |i, j| rows[i][j]))
}

/// Samples with convex-combination weights, the support of an empirical
/// embedding `Σ wᵢ φ(zᵢ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSampleSet {
    samples: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl WeightedSampleSet {
    pub fn new(samples: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("weighted sample set"));
        }
        ensure_dim(samples.len(), weights.len())?;
        let dim = samples[0].len();
        for s in &samples {
            ensure_dim(dim, s.len())?;
        }
        check_weights(&weights)?;
        Ok(Self { samples, weights })
    }

    /// Equal weights `1/N`.
    pub fn uniform(samples: Vec<Vec<f64>>) -> Result<Self> {
        let n = samples.len().max(1);
        let weights = vec![1.0 / n as f64; samples.len()];
        Self::new(samples, weights)
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub(crate) fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidWeights("non-finite weight".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidWeights(format!(
            "weights sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// `uᵀ K v` for `K = kernel_matrix(xs, ys)` without materializing `K`.
fn weighted_cross_sum(
    xs: &[Vec<f64>],
    u: &[f64],
    ys: &[Vec<f64>],
    v: &[f64],
    cfg: KernelConfig,
) -> f64 {
    xs.iter()
        .zip(u)
        .map(|(x, ui)| {
            let row: f64 = ys
                .iter()
                .zip(v)
                .map(|(y, vj)| vj * cfg.from_distance(l1_distance(x, y)))
                .sum();
            ui * row
        })
        .sum()
}

/// Squared MMD `‖μ_A − μ_B‖²` between two weighted empirical embeddings.
///
/// Round-off negatives are clamped to zero.
pub fn mmd_sq(a: &WeightedSampleSet, b: &WeightedSampleSet, cfg: KernelConfig) -> Result<f64> {
    ensure_dim(a.dim(), b.dim())?;
    let aa = weighted_cross_sum(&a.samples, &a.weights, &a.samples, &a.weights, cfg);
    let ab = weighted_cross_sum(&a.samples, &a.weights, &b.samples, &b.weights, cfg);
    let bb = weighted_cross_sum(&b.samples, &b.weights, &b.samples, &b.weights, cfg);
    Ok((aa - 2.0 * ab + bb).max(0.0))
}

/// Squared MMD between the weighted embedding of non-negative scalar
/// residuals and a point mass at zero.
///
/// With every Dirac sample at exactly `0`, `K_δδ` is all ones and
/// `K(r, 0) = exp(−r/σ)`, giving
///
/// ```text
/// βᵀ K_rr β − 2 Σᵢ βᵢ exp(−rᵢ/σ) + 1
/// ```
pub fn mmd_to_dirac(residuals: &[f64], weights: &[f64], cfg: KernelConfig) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::Empty("residuals"));
    }
    ensure_dim(residuals.len(), weights.len())?;
    if let Some((index, &value)) = residuals.iter().enumerate().find(|(_, r)| !(**r >= 0.0)) {
        return Err(Error::NegativeResidual { index, value });
    }
    check_weights(weights)?;

    let self_term = if residuals.len() <= DENSE_DIRAC_LIMIT {
        dense_scalar_quadratic(residuals, weights, cfg)
    } else {
        sorted_scalar_quadratic(residuals, weights, cfg)
    };
    let cross: f64 = residuals
        .iter()
        .zip(weights)
        .map(|(r, w)| w * cfg.from_distance(*r))
        .sum();
    Ok((self_term - 2.0 * cross + 1.0).max(0.0))
}

fn dense_scalar_quadratic(r: &[f64], w: &[f64], cfg: KernelConfig) -> f64 {
    let mut total = 0.0;
    for i in 0..r.len() {
        let mut row = 0.0;
        for j in 0..r.len() {
            row += w[j] * cfg.from_distance((r[i] - r[j]).abs());
        }
        total += w[i] * row;
    }
    total
}

/// `Σᵢⱼ wᵢwⱼ exp(−|rᵢ − rⱼ|/σ)` in O(N log N): after sorting, the lower
/// triangle obeys `Lᵢ = exp(−(rᵢ − rᵢ₋₁)/σ)(Lᵢ₋₁ + wᵢ₋₁)`.
fn sorted_scalar_quadratic(r: &[f64], w: &[f64], cfg: KernelConfig) -> f64 {
    let mut order: Vec<usize> = (0..r.len()).collect();
    order.sort_by(|&a, &b| r[a].total_cmp(&r[b]));
    let mut diag = 0.0;
    let mut off = 0.0;
    let mut lower = 0.0;
    let mut prev: Option<usize> = None;
    for &i in &order {
        if let Some(p) = prev {
            lower = cfg.from_distance(r[i] - r[p]) * (lower + w[p]);
        }
        diag += w[i] * w[i];
        off += w[i] * lower;
        prev = Some(i);
    }
    diag + 2.0 * off
}

/// Median pairwise L1 distance between distinct rows, the usual bandwidth
/// heuristic. Returns `None` for fewer than two rows or when every pair
/// coincides.
pub fn median_pairwise_l1<R: AsRef<[f64]>>(rows: &[R]) -> Option<f64> {
    let mut d = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d.push(l1_distance(rows[i].as_ref(), rows[j].as_ref()));
        }
    }
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    let m = crate::stats::median_sorted(&d);
    (m > 0.0).then_some(m)
}
