//! Synthetic scenes and obstacle trajectory distributions.
//!
//! A [`ScenarioSpec`] is a declarative JSON document: lane geometry, ego
//! boundary conditions and costs, and a list of obstacle models. Static
//! obstacles sit at a nominal position perturbed by Gaussian-mixture noise;
//! dynamic obstacles draw a lateral intent and a speed setpoint and follow
//! the Frenet planner. An optional placement block re-draws obstacle
//! nominal positions per scene seed.

use std::path::Path;

use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::frenet::{
    BehavioralInput, BoundaryConditions, CurvatureProfile, FrenetPlanner, PlannerGains,
    VehicleParams, DEFAULT_DT, DEFAULT_HORIZON,
};
use crate::optimizer::{ConstraintSpec, CostWeights, PlanProblem};
use crate::risk::{interleave, ObstacleSampleSet};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

/// Minimum `n_val / n_opt` unless explicitly relaxed.
pub const MIN_VALIDATION_RATIO: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lanes {
    pub d_min: f64,
    pub d_max: f64,
    pub centers: Vec<f64>,
}

/// One Gaussian component of a position-noise mixture; `mean` is an offset
/// `(Δs, Δd)` from the nominal position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseComponent {
    pub weight: f64,
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub components: Vec<NoiseComponent>,
}

impl NoiseModel {
    pub fn gaussian(cov: [[f64; 2]; 2]) -> Self {
        Self {
            components: vec![NoiseComponent {
                weight: 1.0,
                mean: [0.0, 0.0],
                cov,
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Empty("noise components"));
        }
        check_mixture(self.components.iter().map(|c| c.weight))?;
        for c in &self.components {
            if c.mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig("non-finite noise mean".into()));
            }
            cov_sqrt(c.cov)?;
        }
        Ok(())
    }

    fn sampler(&self) -> Result<MixtureSampler> {
        self.validate()?;
        Ok(MixtureSampler {
            index: WeightedIndex::new(self.components.iter().map(|c| c.weight))
                .map_err(|e| Error::InvalidConfig(format!("mixture weights: {e}")))?,
            means: self
                .components
                .iter()
                .map(|c| Vector2::from(c.mean))
                .collect(),
            roots: self
                .components
                .iter()
                .map(|c| cov_sqrt(c.cov))
                .collect::<Result<_>>()?,
        })
    }
}

fn check_mixture(weights: impl Iterator<Item = f64>) -> Result<()> {
    let w: Vec<f64> = weights.collect();
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidConfig(
            "mixture weights must be non-negative".into(),
        ));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "mixture weights sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Symmetric square root of a PSD 2×2 covariance.
fn cov_sqrt(c: [[f64; 2]; 2]) -> Result<Matrix2<f64>> {
    if c[0][1] != c[1][0] || c.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "covariance {c:?} must be finite and symmetric"
        )));
    }
    let m = Matrix2::new(c[0][0], c[0][1], c[1][0], c[1][1]);
    let eig = SymmetricEigen::new(m);
    if eig.eigenvalues.iter().any(|&l| l < -1e-12) {
        return Err(Error::InvalidConfig(format!(
            "covariance {c:?} is not positive semi-definite"
        )));
    }
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(eig.eigenvectors * Matrix2::from_diagonal(&root) * eig.eigenvectors.transpose())
}

struct MixtureSampler {
    index: WeightedIndex<f64>,
    means: Vec<Vector2<f64>>,
    roots: Vec<Matrix2<f64>>,
}

impl MixtureSampler {
    fn draw<R: Rng>(&self, rng: &mut R) -> Vector2<f64> {
        let j = self.index.sample(rng);
        let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        self.means[j] + self.roots[j] * z
    }
}

/// Lateral intent of a dynamic obstacle: target offset and probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intent {
    pub offset: f64,
    pub probability: f64,
}

/// One component of the speed-setpoint mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedMode {
    pub mean: f64,
    pub std: f64,
    pub weight: f64,
}

/// Default speed mixture: `nominal − 2, nominal, nominal + 2` with equal
/// weights.
pub fn default_speed_modes(nominal: f64, std: f64) -> Vec<SpeedMode> {
    [-2.0, 0.0, 2.0]
        .iter()
        .map(|o| SpeedMode {
            mean: nominal + o,
            std,
            weight: 1.0 / 3.0,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObstacleModel {
    Static {
        nominal: [f64; 2],
        noise: NoiseModel,
    },
    Dynamic {
        /// Initial `(s, d)`.
        start: [f64; 2],
        speed: f64,
        intents: Vec<Intent>,
        speed_modes: Vec<SpeedMode>,
    },
}

impl ObstacleModel {
    pub fn kind(&self) -> ScenarioKind {
        match self {
            Self::Static { .. } => ScenarioKind::Static,
            Self::Dynamic { .. } => ScenarioKind::Dynamic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Static { nominal, noise } => {
                if nominal.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidConfig("non-finite nominal position".into()));
                }
                noise.validate()
            }
            Self::Dynamic {
                start,
                speed,
                intents,
                speed_modes,
            } => {
                if start.iter().any(|v| !v.is_finite()) || !speed.is_finite() {
                    return Err(Error::InvalidConfig(
                        "non-finite dynamic obstacle state".into(),
                    ));
                }
                if intents.is_empty() || speed_modes.is_empty() {
                    return Err(Error::Empty("dynamic obstacle intents or speed modes"));
                }
                check_mixture(intents.iter().map(|i| i.probability))?;
                check_mixture(speed_modes.iter().map(|m| m.weight))?;
                if intents.iter().any(|i| !i.offset.is_finite()) {
                    return Err(Error::InvalidConfig("non-finite intent offset".into()));
                }
                if speed_modes
                    .iter()
                    .any(|m| !(m.mean.is_finite() && m.std >= 0.0 && m.std.is_finite()))
                {
                    return Err(Error::InvalidConfig("invalid speed mode".into()));
                }
                Ok(())
            }
        }
    }

    /// `n` trajectory samples. `key` separates obstacles sharing a seed.
    pub fn sample(
        &self,
        n: usize,
        seed: u64,
        stream: Stream,
        key: u64,
        horizon: usize,
        dt: f64,
        gains: PlannerGains,
    ) -> Result<ObstacleSampleSet> {
        match self {
            Self::Static { .. } => sample_static(self, n, seed, stream, key, horizon, dt),
            Self::Dynamic { .. } => sample_dynamic(self, n, seed, stream, key, horizon, dt, gains),
        }
    }
}

/// Constant-position samples of a static obstacle.
pub fn sample_static(
    model: &ObstacleModel,
    n: usize,
    seed: u64,
    stream: Stream,
    key: u64,
    horizon: usize,
    dt: f64,
) -> Result<ObstacleSampleSet> {
    let ObstacleModel::Static { nominal, noise } = model else {
        return Err(Error::InvalidConfig(
            "sample_static needs a static obstacle".into(),
        ));
    };
    if n == 0 {
        return Err(Error::Empty("sample count"));
    }
    let sampler = noise.sampler()?;
    let rows = (0..n)
        .map(|i| {
            let mut rng = stream_rng(seed, stream, key, i as u64);
            let x = sampler.draw(&mut rng);
            [nominal[0] + x[0], nominal[1] + x[1]].repeat(horizon)
        })
        .collect();
    ObstacleSampleSet::new(rows, horizon, dt)
}

/// Samples of a dynamic obstacle: a lateral intent and a speed setpoint
/// mapped through the Frenet planner from the obstacle's own state.
#[allow(clippy::too_many_arguments)]
pub fn sample_dynamic(
    model: &ObstacleModel,
    n: usize,
    seed: u64,
    stream: Stream,
    key: u64,
    horizon: usize,
    dt: f64,
    gains: PlannerGains,
) -> Result<ObstacleSampleSet> {
    let ObstacleModel::Dynamic {
        start,
        speed,
        intents,
        speed_modes,
    } = model
    else {
        return Err(Error::InvalidConfig(
            "sample_dynamic needs a dynamic obstacle".into(),
        ));
    };
    model.validate()?;
    if n == 0 {
        return Err(Error::Empty("sample count"));
    }
    let planner = FrenetPlanner::new(horizon, dt, gains)?;
    let bc = BoundaryConditions::new(*speed, start[1]);
    let intent_index = WeightedIndex::new(intents.iter().map(|i| i.probability))
        .map_err(|e| Error::InvalidConfig(format!("intent probabilities: {e}")))?;
    let speed_index = WeightedIndex::new(speed_modes.iter().map(|m| m.weight))
        .map_err(|e| Error::InvalidConfig(format!("speed weights: {e}")))?;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = stream_rng(seed, stream, key, i as u64);
        let intent = intents[intent_index.sample(&mut rng)];
        let mode = speed_modes[speed_index.sample(&mut rng)];
        let z: f64 = rng.sample(StandardNormal);
        let b = BehavioralInput::new(intent.offset, mode.mean + mode.std * z)?;
        let (s, d) = planner.plan_positions(b, &bc)?;
        let s: Vec<f64> = s.iter().map(|v| v + start[0]).collect();
        rows.push(interleave(&s, &d));
    }
    ObstacleSampleSet::new(rows, horizon, dt)
}

/// Independent optimization and validation draws from one model.
pub fn split(
    model: &ObstacleModel,
    n_opt: usize,
    n_val: usize,
    seed: u64,
    key: u64,
    horizon: usize,
    dt: f64,
    gains: PlannerGains,
) -> Result<(ObstacleSampleSet, ObstacleSampleSet)> {
    let opt_stream = match model.kind() {
        ScenarioKind::Static => Stream::StaticSamples,
        ScenarioKind::Dynamic => Stream::DynamicSamples,
    };
    let opt = model.sample(n_opt, seed, opt_stream, key, horizon, dt, gains)?;
    let val = model.sample(n_val, seed, Stream::Validation, key, horizon, dt, gains)?;
    Ok((opt, val))
}

/// Per-seed re-draw of obstacle nominal positions: `s` uniform in
/// `s_range`, lateral position a uniformly chosen lane center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub s_range: [f64; 2],
    /// Lane centers to choose from; dynamic obstacles keep their lateral
    /// start.
    pub d_choices: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub kind: ScenarioKind,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub lanes: Lanes,
    pub ego: BoundaryConditions,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub curvature: CurvatureProfile,
    #[serde(default)]
    pub cost: CostWeights,
    #[serde(default)]
    pub gains: PlannerGains,
    pub obstacles: Vec<ObstacleModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<Placement>,
    #[serde(default = "default_n_opt")]
    pub n_opt: usize,
    #[serde(default = "default_n_val")]
    pub n_val: usize,
    /// Permit `n_val < 100 · n_opt`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_small_validation: bool,
}

fn default_horizon() -> usize {
    DEFAULT_HORIZON
}
fn default_dt() -> f64 {
    DEFAULT_DT
}
fn default_n_opt() -> usize {
    100
}
fn default_n_val() -> usize {
    10_000
}

/// A scenario instantiated for one seed: resolved obstacle positions and
/// sample sets.
#[derive(Debug, Clone)]
pub struct Scene {
    pub seed: u64,
    pub problem: PlanProblem,
    pub obstacles: Vec<ObstacleModel>,
    pub optimization: Vec<ObstacleSampleSet>,
    pub validation: Vec<ObstacleSampleSet>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 5 {
            return Err(Error::InvalidConfig(format!(
                "horizon {} < 5",
                self.horizon
            )));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.lanes.d_min < self.lanes.d_max) {
            return Err(Error::InvalidConfig(
                "lanes.d_min must be below lanes.d_max".into(),
            ));
        }
        if self
            .lanes
            .centers
            .iter()
            .any(|c| !(self.lanes.d_min..=self.lanes.d_max).contains(c))
        {
            return Err(Error::InvalidConfig(
                "lane centers must lie within [d_min, d_max]".into(),
            ));
        }
        self.ego.validate()?;
        self.vehicle.validate()?;
        self.curvature.validate()?;
        self.cost.validate()?;
        self.gains.validate()?;
        for ob in &self.obstacles {
            ob.validate()?;
            if ob.kind() != self.kind {
                return Err(Error::InvalidConfig(format!(
                    "{:?} obstacle in a {:?} scenario",
                    ob.kind(),
                    self.kind
                )));
            }
        }
        if let Some(p) = &self.placement {
            if !(p.s_range[0] <= p.s_range[1]) || p.s_range.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(
                    "placement.s_range must be an ordered finite pair".into(),
                ));
            }
            if self.kind == ScenarioKind::Static && p.d_choices.is_empty() {
                return Err(Error::Empty("placement.d_choices"));
            }
        }
        if self.n_opt == 0 || self.n_val == 0 {
            return Err(Error::InvalidConfig(
                "n_opt and n_val must be positive".into(),
            ));
        }
        if !self.allow_small_validation && self.n_val < MIN_VALIDATION_RATIO * self.n_opt {
            return Err(Error::InvalidConfig(format!(
                "n_val ({}) must be at least {MIN_VALIDATION_RATIO}x n_opt ({})",
                self.n_val, self.n_opt
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn constraints(&self) -> ConstraintSpec {
        ConstraintSpec {
            d_min: self.lanes.d_min,
            d_max: self.lanes.d_max,
            v_max: self.vehicle.v_max,
            a_max: self.vehicle.a_max,
        }
    }

    pub fn problem(&self) -> PlanProblem {
        PlanProblem {
            bc: self.ego,
            weights: self.cost,
            constraints: self.constraints(),
            vehicle: self.vehicle,
            curvature: self.curvature.clone(),
        }
    }

    /// Obstacle models with nominal positions drawn for `seed`.
    pub fn placed_obstacles(&self, seed: u64) -> Vec<ObstacleModel> {
        let Some(p) = &self.placement else {
            return self.obstacles.clone();
        };
        let mut rng = stream_rng(seed, Stream::Placement, 0, 0);
        self.obstacles
            .iter()
            .map(|ob| {
                let s = if p.s_range[0] < p.s_range[1] {
                    rng.random_range(p.s_range[0]..p.s_range[1])
                } else {
                    p.s_range[0]
                };
                let d = (!p.d_choices.is_empty())
                    .then(|| p.d_choices[rng.random_range(0..p.d_choices.len())]);
                match ob.clone() {
                    ObstacleModel::Static { nominal, noise } => ObstacleModel::Static {
                        nominal: [s, d.unwrap_or(nominal[1])],
                        noise,
                    },
                    ObstacleModel::Dynamic {
                        start,
                        speed,
                        intents,
                        speed_modes,
                    } => ObstacleModel::Dynamic {
                        start: [s, start[1]],
                        speed,
                        intents,
                        speed_modes,
                    },
                }
            })
            .collect()
    }

    /// Place obstacles and draw optimization/validation sets for `seed`.
    pub fn instantiate(&self, seed: u64) -> Result<Scene> {
        self.instantiate_with(seed, self.n_opt, self.n_val)
    }

    pub fn instantiate_with(&self, seed: u64, n_opt: usize, n_val: usize) -> Result<Scene> {
        self.validate()?;
        let obstacles = self.placed_obstacles(seed);
        let mut optimization = Vec::with_capacity(obstacles.len());
        let mut validation = Vec::with_capacity(obstacles.len());
        for (j, ob) in obstacles.iter().enumerate() {
            let (o, v) = split(
                ob,
                n_opt,
                n_val,
                seed,
                j as u64,
                self.horizon,
                self.dt,
                self.gains,
            )?;
            optimization.push(o);
            validation.push(v);
        }
        Ok(Scene {
            seed,
            problem: self.problem(),
            obstacles,
            optimization,
            validation,
        })
    }
}

/// Names of the built-in scenario presets.
pub const PRESET_NAMES: [&str; 5] = [
    "static_gaussian",
    "static_bimodal",
    "static_trimodal",
    "dynamic_cut_in_low",
    "dynamic_cut_in_high",
];

const LANE_CENTERS: [f64; 2] = [0.0, 3.5];

fn base_spec(
    name: &str,
    kind: ScenarioKind,
    obstacles: Vec<ObstacleModel>,
    placement: Placement,
) -> ScenarioSpec {
    ScenarioSpec {
        name: name.to_string(),
        kind,
        horizon: DEFAULT_HORIZON,
        dt: DEFAULT_DT,
        lanes: Lanes {
            d_min: -1.75,
            d_max: 5.25,
            centers: LANE_CENTERS.to_vec(),
        },
        ego: BoundaryConditions::new(3.0, 0.0),
        vehicle: VehicleParams::default(),
        curvature: CurvatureProfile::Zero,
        cost: CostWeights::default(),
        gains: PlannerGains::default(),
        obstacles,
        placement: Some(placement),
        n_opt: 100,
        n_val: 10_000,
        allow_small_validation: false,
    }
}

fn diag(a: f64, b: f64) -> [[f64; 2]; 2] {
    [[a, 0.0], [0.0, b]]
}

fn static_noise(name: &str) -> Option<NoiseModel> {
    let c = |weight: f64, mean: [f64; 2], cov: [[f64; 2]; 2]| NoiseComponent { weight, mean, cov };
    Some(match name {
        "static_gaussian" => NoiseModel::gaussian(diag(1.0, 0.25)),
        "static_bimodal" => NoiseModel {
            components: vec![
                c(0.7, [-1.0, -0.8], diag(0.25, 0.04)),
                c(0.3, [1.0, 0.8], diag(0.25, 0.04)),
            ],
        },
        "static_trimodal" => NoiseModel {
            components: vec![
                c(0.5, [0.0, -1.0], diag(0.25, 0.04)),
                c(0.3, [0.0, 0.0], diag(0.25, 0.04)),
                c(0.2, [0.0, 1.0], diag(0.25, 0.04)),
            ],
        },
        _ => return None,
    })
}

/// Built-in scenario by name (see [`PRESET_NAMES`]).
pub fn preset(name: &str) -> Result<ScenarioSpec> {
    if let Some(noise) = static_noise(name) {
        let obstacles = (0..3)
            .map(|_| ObstacleModel::Static {
                nominal: [15.0, 0.0],
                noise: noise.clone(),
            })
            .collect();
        let placement = Placement {
            s_range: [8.0, 22.0],
            d_choices: LANE_CENTERS.to_vec(),
        };
        return Ok(base_spec(name, ScenarioKind::Static, obstacles, placement));
    }
    let cut_in = match name {
        "dynamic_cut_in_low" => 0.2,
        "dynamic_cut_in_high" => 0.8,
        _ => {
            return Err(Error::InvalidConfig(format!(
                "unknown scenario preset '{name}'"
            )))
        }
    };
    let speed = 3.0;
    let obstacle = ObstacleModel::Dynamic {
        start: [8.0, LANE_CENTERS[1]],
        speed,
        intents: vec![
            Intent {
                offset: LANE_CENTERS[0],
                probability: cut_in,
            },
            Intent {
                offset: LANE_CENTERS[1],
                probability: 1.0 - cut_in,
            },
        ],
        speed_modes: default_speed_modes(speed, 0.3),
    };
    let placement = Placement {
        s_range: [5.0, 11.0],
        d_choices: vec![],
    };
    Ok(base_spec(
        name,
        ScenarioKind::Dynamic,
        vec![obstacle],
        placement,
    ))
}
