//! Reduced-set selection: pick `N′` of `N` obstacle samples, weight them, and
//! choose the kernel bandwidth so that the weighted embedding of the subset
//! matches the uniform embedding of the full set.
//!
//! The outer search is a cross-entropy method over `(λ ∈ R^N, log σ)`. A
//! candidate `λ` selects the `N′` rows with the largest `|λ_t|`; for those
//! rows the weights solve
//!
//! ```text
//! min_β βᵀK′β − 2bᵀβ   s.t. 1ᵀβ = 1,   b_l = (1/N) Σᵢ K(τ′_l, τᵢ)
//! ```
//!
//! in closed form, and the candidate is scored by the remaining embedding
//! gap.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::frenet::{EgoTrajectory, VehicleParams};
use crate::kernel::{l1_distance, median_pairwise_l1, KernelConfig};
use crate::kkt::EqualityQp;
use crate::risk::{r_mmd, residuals, ObstacleSampleSet};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

/// `N′` weighted rows of an obstacle sample set plus the bandwidth they were
/// fitted with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedSet {
    pub indices: Vec<usize>,
    pub samples: ObstacleSampleSet,
    pub beta: Vec<f64>,
    pub sigma: f64,
}

impl ReducedSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn kernel(&self) -> Result<KernelConfig> {
        KernelConfig::new(self.sigma)
    }

    /// The whole set with uniform weights.
    pub fn full(set: &ObstacleSampleSet, sigma: f64) -> Self {
        let n = set.len();
        Self {
            indices: (0..n).collect(),
            samples: set.clone(),
            beta: vec![1.0 / n as f64; n],
            sigma,
        }
    }

    /// Rows `indices` with the given weights, checked against `set`.
    pub fn from_parts(
        set: &ObstacleSampleSet,
        indices: Vec<usize>,
        beta: Vec<f64>,
        sigma: f64,
    ) -> Result<Self> {
        check_indices(&indices, set.len())?;
        crate::error::ensure_dim(indices.len(), beta.len())?;
        crate::kernel::check_weights(&beta)?;
        KernelConfig::new(sigma)?;
        Ok(Self {
            samples: set.subset(&indices)?,
            indices,
            beta,
            sigma,
        })
    }
}

/// Cross-entropy search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CemConfig {
    pub e_cem: usize,
    pub n_cem: usize,
    pub n_elite: usize,
    /// Initial mean and variance of every `λ` coordinate.
    pub lambda_mean: f64,
    pub lambda_var: f64,
    /// Initial mean of `log σ`; `None` uses the log median pairwise L1
    /// distance of the rows.
    pub log_sigma_mean: Option<f64>,
    pub log_sigma_var: f64,
    /// If set, sampled `log σ` is clamped to `center ± window`, where
    /// `center` is the initial `log σ` mean.
    pub log_sigma_window: Option<f64>,
    /// Added to the diagonal of every refitted covariance.
    pub cov_floor: f64,
    /// Ridge on `K′` in the weight problem.
    pub ridge: f64,
    pub seed: u64,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            e_cem: 20,
            n_cem: 64,
            n_elite: 8,
            lambda_mean: 0.0,
            lambda_var: 1.0,
            log_sigma_mean: None,
            log_sigma_var: 0.25,
            log_sigma_window: Some(1.0),
            cov_floor: 1e-6,
            ridge: 1e-8,
            seed: 0,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.e_cem < 1 || self.n_cem < 1 {
            return bad("e_cem and n_cem must be at least 1".into());
        }
        if self.n_elite < 1 || self.n_elite > self.n_cem {
            return bad(format!(
                "n_elite must lie in 1..={}, got {}",
                self.n_cem, self.n_elite
            ));
        }
        if !(self.lambda_var > 0.0 && self.log_sigma_var > 0.0) {
            return bad("initial variances must be positive".into());
        }
        if !(self.cov_floor >= 0.0 && self.ridge >= 0.0) {
            return bad("cov_floor and ridge must be non-negative".into());
        }
        if let Some(w) = self.log_sigma_window {
            if !(w >= 0.0) {
                return bad(format!("log_sigma_window must be non-negative, got {w}"));
            }
        }
        Ok(())
    }
}

fn check_indices(indices: &[usize], n: usize) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::Empty("reduced-set indices"));
    }
    let mut seen = vec![false; n];
    for &i in indices {
        if i >= n {
            return Err(Error::OutOfRange(format!("row index {i} >= {n}")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidConfig(format!("duplicate row index {i}")));
        }
    }
    Ok(())
}

/// Indices of the `n_prime` entries of largest `|λ|`, listed in ascending
/// order of magnitude (stable: equal magnitudes keep index order).
pub fn select_rows(lambda: &[f64], n_prime: usize) -> Result<Vec<usize>> {
    let n = lambda.len();
    if n_prime < 1 || n_prime > n {
        return Err(Error::OutOfRange(format!(
            "n_prime {n_prime} not in 1..={n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lambda[a].abs().total_cmp(&lambda[b].abs()));
    Ok(order[n - n_prime..].to_vec())
}

/// Pairwise L1 distances of all rows, computed once per search.
#[derive(Debug, Clone)]
pub struct DistanceCache {
    n: usize,
    dist: Vec<f64>,
}

impl DistanceCache {
    pub fn new(set: &ObstacleSampleSet) -> Self {
        let n = set.len();
        let rows = set.rows();
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (i + 1..n)
                    .map(|j| l1_distance(&rows[i], &rows[j]))
                    .collect()
            })
            .collect();
        let mut dist = vec![0.0; n * n];
        for (i, row) in upper.iter().enumerate() {
            for (off, &v) in row.iter().enumerate() {
                let j = i + 1 + off;
                dist[i * n + j] = v;
                dist[j * n + i] = v;
            }
        }
        Self { n, dist }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    /// `(1/N²) Σᵢⱼ K(τᵢ, τⱼ)`, the full set's self term.
    fn full_self_term(&self, cfg: KernelConfig) -> f64 {
        let off: f64 = (0..self.n)
            .map(|i| {
                (i + 1..self.n)
                    .map(|j| cfg.from_distance(self.get(i, j)))
                    .sum::<f64>()
            })
            .sum();
        (self.n as f64 + 2.0 * off) / (self.n * self.n) as f64
    }

    /// `K′` over `indices` and `b_l = (1/N) Σᵢ K(τ_{indices[l]}, τᵢ)`.
    fn weight_problem(&self, indices: &[usize], cfg: KernelConfig) -> (DMatrix<f64>, DVector<f64>) {
        let m = indices.len();
        let k = DMatrix::from_fn(m, m, |a, b| {
            cfg.from_distance(self.get(indices[a], indices[b]))
        });
        let b = DVector::from_fn(m, |l, _| {
            (0..self.n)
                .map(|i| cfg.from_distance(self.get(indices[l], i)))
                .sum::<f64>()
                / self.n as f64
        });
        (k, b)
    }

    fn solve_weights(
        &self,
        indices: &[usize],
        cfg: KernelConfig,
        ridge: f64,
    ) -> Result<(Vec<f64>, f64)> {
        let (k, b) = self.weight_problem(indices, cfg);
        let beta = weights_from_problem(&k, &b, ridge)?;
        let bv = DVector::from_column_slice(&beta);
        let gap = self.full_self_term(cfg) - 2.0 * b.dot(&bv) + (&k * &bv).dot(&bv);
        Ok((beta, gap.max(0.0)))
    }
}

fn weights_from_problem(k: &DMatrix<f64>, b: &DVector<f64>, ridge: f64) -> Result<Vec<f64>> {
    let m = k.nrows();
    if m == 1 {
        return Ok(vec![1.0]);
    }
    let mut hess = k.clone();
    for i in 0..m {
        hess[(i, i)] += ridge;
    }
    hess *= 2.0;
    let qp = EqualityQp::new(hess, DMatrix::from_element(1, m, 1.0))?;
    let sol = qp.solve(&(-2.0 * b), &DVector::from_element(1, 1.0))?;
    Ok(sol.x.as_slice().to_vec())
}

/// Default ridge for the weight problem.
pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Weights of rows `indices` minimizing the embedding gap to the uniform full
/// set under `cfg`.
pub fn optimal_weights(
    set: &ObstacleSampleSet,
    indices: &[usize],
    cfg: KernelConfig,
) -> Result<Vec<f64>> {
    check_indices(indices, set.len())?;
    let rows = set.rows();
    let m = indices.len();
    let k = DMatrix::from_fn(m, m, |a, b| {
        cfg.from_distance(l1_distance(&rows[indices[a]], &rows[indices[b]]))
    });
    let b = DVector::from_fn(m, |l, _| {
        rows.iter()
            .map(|r| cfg.from_distance(l1_distance(&rows[indices[l]], r)))
            .sum::<f64>()
            / rows.len() as f64
    });
    weights_from_problem(&k, &b, DEFAULT_RIDGE)
}

/// Squared MMD between the uniform embedding of `set` and the weighted
/// embedding of `rs`, with kernel bandwidth `rs.sigma`.
pub fn embedding_gap(set: &ObstacleSampleSet, rs: &ReducedSet) -> Result<f64> {
    let cfg = rs.kernel()?;
    let full = crate::kernel::WeightedSampleSet::uniform(set.rows().to_vec())?;
    let reduced =
        crate::kernel::WeightedSampleSet::new(rs.samples.rows().to_vec(), rs.beta.clone())?;
    crate::kernel::mmd_sq(&full, &reduced, cfg)
}

/// A candidate evaluated ahead of the search, e.g. a solution for a smaller
/// `N′`. Index lists shorter than `N′` are padded with the lowest unused
/// indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub indices: Vec<usize>,
    pub sigma: f64,
}

impl From<&ReducedSet> for Candidate {
    fn from(rs: &ReducedSet) -> Self {
        Self {
            indices: rs.indices.clone(),
            sigma: rs.sigma,
        }
    }
}

/// Per-iteration record of the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CemIterate {
    pub iteration_best: f64,
    pub best_ever: f64,
    pub mean_log_sigma: f64,
}

#[derive(Debug, Clone)]
pub struct ReduceOutcome {
    pub reduced: ReducedSet,
    pub gap: f64,
    pub trace: Vec<CemIterate>,
}

pub fn reduce(set: &ObstacleSampleSet, n_prime: usize, cfg: &CemConfig) -> Result<ReducedSet> {
    Ok(reduce_with_candidates(set, n_prime, cfg, &[])?.reduced)
}

struct Scored {
    indices: Vec<usize>,
    beta: Vec<f64>,
    log_sigma: f64,
    gap: f64,
}

pub fn reduce_with_candidates(
    set: &ObstacleSampleSet,
    n_prime: usize,
    cfg: &CemConfig,
    candidates: &[Candidate],
) -> Result<ReduceOutcome> {
    cfg.validate()?;
    let n = set.len();
    if n_prime < 1 || n_prime > n {
        return Err(Error::OutOfRange(format!(
            "n_prime {n_prime} not in 1..={n}"
        )));
    }
    let cache = DistanceCache::new(set);
    let center = cfg
        .log_sigma_mean
        .unwrap_or_else(|| median_pairwise_l1(set.rows()).unwrap_or(1.0).ln());
    let clamp_log_sigma = |ls: f64| match cfg.log_sigma_window {
        Some(w) => ls.clamp(center - w, center + w),
        None => ls,
    };
    let evaluate = |indices: Vec<usize>, log_sigma: f64| -> Option<Scored> {
        let kernel = KernelConfig::new(log_sigma.exp()).ok()?;
        let (beta, gap) = cache.solve_weights(&indices, kernel, cfg.ridge).ok()?;
        gap.is_finite().then_some(Scored {
            indices,
            beta,
            log_sigma,
            gap,
        })
    };

    let mut best: Option<Scored> = None;
    let consider = |s: Scored, best: &mut Option<Scored>| {
        if best.as_ref().is_none_or(|b| s.gap < b.gap) {
            *best = Some(s);
        }
    };
    for c in candidates {
        check_indices(&c.indices, n)?;
        if c.indices.len() > n_prime {
            return Err(Error::InvalidConfig(format!(
                "candidate has {} > {n_prime} rows",
                c.indices.len()
            )));
        }
        let mut idx = c.indices.clone();
        let mut fill = 0;
        while idx.len() < n_prime {
            if !idx.contains(&fill) {
                idx.push(fill);
            }
            fill += 1;
        }
        if let Some(s) = evaluate(idx, KernelConfig::new(c.sigma)?.sigma().ln()) {
            consider(s, &mut best);
        }
    }

    let dim = n + 1;
    let mut mean = DVector::from_element(dim, cfg.lambda_mean);
    mean[n] = center;
    let mut cov = DMatrix::from_diagonal_element(dim, dim, cfg.lambda_var);
    cov[(n, n)] = cfg.log_sigma_var;

    let mut trace = Vec::with_capacity(cfg.e_cem);
    for it in 0..cfg.e_cem {
        let chol = cov
            .clone()
            .cholesky()
            .ok_or(Error::SingularSystem("cross-entropy covariance"))?;
        let l = chol.l();
        let draws: Vec<DVector<f64>> = (0..cfg.n_cem)
            .map(|i| {
                let mut rng = stream_rng(cfg.seed, Stream::ReducedSet, it as u64, i as u64);
                let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                &mean + &l * z
            })
            .collect();
        let scored: Vec<Option<Scored>> = draws
            .par_iter()
            .map(|x| {
                let lambda = &x.as_slice()[..n];
                let indices = select_rows(lambda, n_prime).ok()?;
                evaluate(indices, clamp_log_sigma(x[n]))
            })
            .collect();

        let mut ranked: Vec<usize> = (0..cfg.n_cem).filter(|&i| scored[i].is_some()).collect();
        ranked.sort_by(|&a, &b| {
            let (ga, gb) = (
                scored[a].as_ref().unwrap().gap,
                scored[b].as_ref().unwrap().gap,
            );
            ga.total_cmp(&gb).then(a.cmp(&b))
        });
        let iteration_best = ranked
            .first()
            .map_or(f64::INFINITY, |&i| scored[i].as_ref().unwrap().gap);

        let elites: Vec<&DVector<f64>> = ranked
            .iter()
            .take(cfg.n_elite)
            .map(|&i| &draws[i])
            .collect();
        if !elites.is_empty() {
            let k = elites.len() as f64;
            let new_mean = elites.iter().fold(DVector::zeros(dim), |acc, x| acc + *x) / k;
            let mut new_cov = DMatrix::from_diagonal_element(dim, dim, cfg.cov_floor);
            for x in &elites {
                let dx = *x - &new_mean;
                new_cov += &dx * dx.transpose() / k;
            }
            mean = new_mean;
            cov = new_cov;
        }
        let winner = ranked.first().copied();
        let mut scored = scored;
        if let Some(i) = winner {
            consider(scored[i].take().unwrap(), &mut best);
        }
        let best_ever = best.as_ref().map_or(f64::INFINITY, |b| b.gap);
        trace.push(CemIterate {
            iteration_best,
            best_ever,
            mean_log_sigma: mean[n],
        });
    }

    let best =
        best.ok_or_else(|| Error::Degenerate("every reduced-set candidate failed".into()))?;
    let sigma = best.log_sigma.exp();
    let reduced = ReducedSet {
        samples: set.subset(&best.indices)?,
        indices: best.indices,
        beta: best.beta,
        sigma,
    };
    Ok(ReduceOutcome {
        reduced,
        gap: best.gap,
        trace,
    })
}

/// `N′` distinct rows drawn uniformly at random, weighted by the weight
/// problem at bandwidth `sigma`.
pub fn random_reduced_set(
    set: &ObstacleSampleSet,
    n_prime: usize,
    sigma: f64,
    seed: u64,
    draw: u64,
) -> Result<ReducedSet> {
    let n = set.len();
    if n_prime < 1 || n_prime > n {
        return Err(Error::OutOfRange(format!(
            "n_prime {n_prime} not in 1..={n}"
        )));
    }
    let mut rng = stream_rng(seed, Stream::Subset, draw, 0);
    let indices = rand::seq::index::sample(&mut rng, n, n_prime).into_vec();
    let beta = optimal_weights(set, &indices, KernelConfig::new(sigma)?)?;
    ReducedSet::from_parts(set, indices, beta, sigma)
}

/// Absolute difference between the MMD risk of `ego` on the full uniform set
/// and on the reduced set, both under `residual_kernel` (default `rs.sigma`).
pub fn delta_r_mmd(
    ego: &EgoTrajectory,
    set: &ObstacleSampleSet,
    rs: &ReducedSet,
    params: &VehicleParams,
    residual_kernel: Option<KernelConfig>,
) -> Result<f64> {
    let kernel = match residual_kernel {
        Some(k) => k,
        None => rs.kernel()?,
    };
    let full_r = residuals(ego, set, params)?;
    let uniform = vec![1.0 / full_r.len() as f64; full_r.len()];
    let full = r_mmd(&full_r, &uniform, kernel)?;
    let reduced = r_mmd(&residuals(ego, &rs.samples, params)?, &rs.beta, kernel)?;
    Ok((full - reduced).abs())
}
