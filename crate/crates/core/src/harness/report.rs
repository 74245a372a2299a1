//! Benchmark records, aggregates and their file formats.
//!
//! `records.csv` holds only deterministic fields so two runs of the same
//! sweep produce byte-identical files; wall times go to `timings.csv`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SceneOutcome, Variant};
use crate::risk::RiskTag;
use crate::stats::Summary;
use crate::Result;

/// Outcome of one (scenario, risk, `N′`, variant, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scenario: String,
    pub risk: RiskTag,
    pub n_prime: usize,
    pub seed: u64,
    pub variant: Variant,
    /// `ok`, or `error: …` for a failed run.
    pub status: String,
    pub collision_rate: f64,
    pub final_risk: f64,
    pub final_residual: f64,
    pub final_cost: f64,
    pub behavior_d: f64,
    pub behavior_v: f64,
}

impl SceneRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Wall times of reduced-set construction and planning, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub reduce_ms: f64,
    pub plan_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scenario: String,
    pub risk: RiskTag,
    pub n_prime: usize,
    pub variant: Variant,
    pub runs: usize,
    pub failures: usize,
    /// Collision-rate summary over successful runs.
    pub collision_rate: Option<Summary>,
    pub mean_collision_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub records: Vec<SceneRecord>,
    pub aggregates: Vec<Aggregate>,
    /// Wall times, parallel to `records`. Kept out of the records file so
    /// that file stays reproducible.
    pub timings: Vec<Timing>,
}

impl BenchmarkReport {
    /// Aggregate for one group, if present.
    pub fn find(
        &self,
        scenario: &str,
        risk: RiskTag,
        n_prime: usize,
        variant: Variant,
    ) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| {
            a.scenario == scenario && a.risk == risk && a.n_prime == n_prime && a.variant == variant
        })
    }
}

/// Group records by (scenario, risk, `N′`, variant) and summarize collision
/// rates. Groups are ordered by key.
pub fn aggregate(records: &[SceneRecord]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(String, RiskTag, usize, Variant), Vec<&SceneRecord>> =
        BTreeMap::new();
    for r in records {
        groups
            .entry((r.scenario.clone(), r.risk, r.n_prime, r.variant))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((scenario, risk, n_prime, variant), rs)| {
            let rates: Vec<f64> = rs
                .iter()
                .filter(|r| r.is_ok())
                .map(|r| r.collision_rate)
                .collect();
            Aggregate {
                scenario,
                risk,
                n_prime,
                variant,
                runs: rs.len(),
                failures: rs.len() - rates.len(),
                collision_rate: Summary::of(&rates),
                mean_collision_rate: (!rates.is_empty())
                    .then(|| rates.iter().sum::<f64>() / rates.len() as f64),
            }
        })
        .collect()
}

pub fn write_records_csv(path: impl AsRef<Path>, records: &[SceneRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv(path: impl AsRef<Path>) -> Result<Vec<SceneRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct TimingRow<'a> {
    scenario: &'a str,
    risk: RiskTag,
    n_prime: usize,
    variant: Variant,
    seed: u64,
    reduce_ms: f64,
    plan_ms: f64,
}

pub fn write_timings_csv(path: impl AsRef<Path>, outcomes: &[SceneOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for o in outcomes {
        let r = &o.record;
        w.serialize(TimingRow {
            scenario: &r.scenario,
            risk: r.risk,
            n_prime: r.n_prime,
            variant: r.variant,
            seed: r.seed,
            reduce_ms: o.timing.reduce_ms,
            plan_ms: o.timing.plan_ms,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregates_json(path: impl AsRef<Path>, aggregates: &[Aggregate]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, aggregates)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

/// Optimized trajectory of one run, for external plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDump {
    pub scenario: String,
    pub risk: RiskTag,
    pub n_prime: usize,
    pub variant: Variant,
    pub seed: u64,
    pub s: Vec<f64>,
    pub d: Vec<f64>,
}

impl TrajectoryDump {
    pub fn from_outcome(o: &SceneOutcome) -> Option<Self> {
        let p = o.plan.as_ref()?;
        let r = &o.record;
        Some(Self {
            scenario: r.scenario.clone(),
            risk: r.risk,
            n_prime: r.n_prime,
            variant: r.variant,
            seed: r.seed,
            s: p.best_trajectory.s().to_vec(),
            d: p.best_trajectory.d().to_vec(),
        })
    }
}

pub fn write_trajectories_jsonl(path: impl AsRef<Path>, outcomes: &[SceneOutcome]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    for dump in outcomes.iter().filter_map(TrajectoryDump::from_outcome) {
        serde_json::to_writer(&mut f, &dump)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}
