use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use riskplan::harness::{
    mpc_drive, run_many, run_scene, write_aggregates_json, write_records_csv, write_timings_csv,
    write_trajectories_jsonl, RunConfig, RunSettings, SweepConfig, TrajectoryDump, Variant,
};
use riskplan::reduced_set::{embedding_gap, reduce_with_candidates};
use riskplan::risk::{ObstacleSampleSet, RiskTag};
use riskplan::scenario::{preset, ScenarioSpec, PRESET_NAMES};

const CONFIG_DIR_ENV: &str = "RISKPLAN_CONFIG_DIR";
const SETTINGS_FILE: &str = "settings.json";

#[derive(Parser)]
#[command(
    name = "riskplan",
    version,
    about = "Risk-aware trajectory planning benchmarks"
)]
struct Cli {
    /// Run settings JSON (CEM, optimizer and residual-kernel configuration).
    /// Defaults to settings.json in the config directory when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory searched for settings.json and for scenario files given by
    /// relative path.
    #[arg(long, global = true, env = CONFIG_DIR_ENV)]
    config_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress an obstacle sample set to a weighted reduced set.
    Reduce(ReduceArgs),
    /// Plan a single scene and report its validation collision rate.
    Plan(PlanArgs),
    /// Run a sweep over scenarios, risks, reduced-set sizes and seeds.
    Benchmark(BenchmarkArgs),
    /// Receding-horizon driving loop.
    Mpc(MpcArgs),
    /// Scenario file utilities.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Parse and validate scenario files.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Print a built-in scenario as JSON.
    Show { name: String },
    /// List built-in scenario names.
    List,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReducedSetMode {
    Optimal,
    Random,
}

#[derive(Args)]
struct SelectionArgs {
    /// Feed the optimal reduced set (uniform weights) to the SAA, CVaR and
    /// scenario baselines instead of their first N′ samples.
    #[arg(long)]
    baseline_uses_reduced_set: bool,

    /// Reduced set used by the MMD risk.
    #[arg(long, value_enum, default_value = "optimal")]
    reduced_set: ReducedSetMode,
}

impl SelectionArgs {
    fn variant_for(&self, risk: RiskTag) -> Variant {
        match (risk, self.reduced_set, self.baseline_uses_reduced_set) {
            (RiskTag::Mmd, ReducedSetMode::Random, _) => Variant::RandomReducedSet,
            (RiskTag::Mmd, ReducedSetMode::Optimal, _) => Variant::Standard,
            (_, _, true) => Variant::BaselineReducedSet,
            (_, _, false) => Variant::Standard,
        }
    }
}

#[derive(Args)]
struct ReduceArgs {
    /// Obstacle sample set JSON (`horizon`, `dt`, `rows`). If omitted the
    /// optimization set of `--scenario` is used.
    #[arg(long, conflicts_with = "scenario")]
    samples: Option<PathBuf>,
    /// Scenario file or built-in name.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Obstacle index within the scenario.
    #[arg(long, default_value_t = 0)]
    obstacle: usize,
    #[arg(long)]
    n_prime: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value = "mmd")]
    risk: RiskTag,
    #[arg(long, default_value_t = 5)]
    n_prime: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    selection: SelectionArgs,
    /// Write the planned trajectory as JSON to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Scenario files or built-in names (repeatable, comma separated).
    #[arg(long, required = true, value_delimiter = ',')]
    scenario: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values = ["mmd", "saa", "cvar"])]
    risk: Vec<RiskTag>,
    #[arg(long, value_delimiter = ',', default_values = ["5"])]
    n_prime: Vec<usize>,
    /// Seed list: `0..20` (half-open range), `3,5,8`, or a mix.
    #[arg(long, default_value = "0..20", value_parser = parse_seeds)]
    seeds: SeedList,
    /// Worker threads; 0 uses every core. `--workers 1` gives byte-identical
    /// output across runs.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    selection: SelectionArgs,
    /// Also write planned trajectories as JSON lines.
    #[arg(long)]
    trajectories: bool,
}

#[derive(Args)]
struct MpcArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value = "mmd")]
    risk: RiskTag,
    #[arg(long, default_value_t = 5)]
    n_prime: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    cycles: usize,
    /// JSON-lines log of every cycle; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct SeedList(Vec<u64>);

fn parse_seeds(text: &str) -> std::result::Result<SeedList, String> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a
                .parse()
                .map_err(|_| format!("bad range start in '{part}'"))?;
            let b: u64 = b
                .parse()
                .map_err(|_| format!("bad range end in '{part}'"))?;
            if b <= a {
                return Err(format!("empty seed range '{part}'"));
            }
            seeds.extend(a..b);
        } else {
            seeds.push(part.parse().map_err(|_| format!("bad seed '{part}'"))?);
        }
    }
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(SeedList(seeds))
}

struct Env {
    settings: RunSettings,
    config_dir: Option<PathBuf>,
}

impl Env {
    fn load(cli: &Cli) -> Result<Self> {
        let settings_path = match (&cli.config, &cli.config_dir) {
            (Some(p), _) => Some(p.clone()),
            (None, Some(dir)) => Some(dir.join(SETTINGS_FILE)).filter(|p| p.is_file()),
            (None, None) => None,
        };
        let settings = match settings_path {
            Some(path) => {
                let text = fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let s: RunSettings = serde_json::from_str(&text)
                    .with_context(|| format!("parsing {}", path.display()))?;
                s.validate()
                    .with_context(|| format!("invalid settings in {}", path.display()))?;
                s
            }
            None => RunSettings::default(),
        };
        Ok(Self {
            settings,
            config_dir: cli.config_dir.clone(),
        })
    }

    /// A scenario argument is an existing path, a path relative to the config
    /// directory, or a built-in name.
    fn scenario(&self, arg: &str) -> Result<ScenarioSpec> {
        let direct = Path::new(arg);
        let mut candidates = vec![direct.to_path_buf()];
        if let Some(dir) = &self.config_dir {
            if direct.is_relative() {
                candidates.push(dir.join(arg));
                candidates.push(dir.join(format!("{arg}.json")));
            }
        }
        if let Some(path) = candidates.iter().find(|p| p.is_file()) {
            return ScenarioSpec::load(path)
                .with_context(|| format!("loading scenario {}", path.display()));
        }
        if PRESET_NAMES.contains(&arg) {
            return Ok(preset(arg)?);
        }
        bail!(
            "scenario '{arg}' is neither a file nor a built-in name ({})",
            PRESET_NAMES.join(", ")
        )
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let ctx = Env::load(&cli)?;
    match &cli.command {
        Command::Reduce(a) => cmd_reduce(&ctx, a),
        Command::Plan(a) => cmd_plan(&ctx, a),
        Command::Benchmark(a) => cmd_benchmark(&ctx, a),
        Command::Mpc(a) => cmd_mpc(&ctx, a),
        Command::Scenario(c) => cmd_scenario(&ctx, c),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn cmd_reduce(ctx: &Env, a: &ReduceArgs) -> Result<()> {
    let set: ObstacleSampleSet = match (&a.samples, &a.scenario) {
        (Some(path), _) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(name)) => {
            let spec = ctx.scenario(name)?;
            let scene = spec.instantiate(a.seed)?;
            let n = scene.optimization.len();
            scene
                .optimization
                .into_iter()
                .nth(a.obstacle)
                .with_context(|| format!("obstacle {} out of range (scene has {n})", a.obstacle))?
        }
        (None, None) => bail!("either --samples or --scenario is required"),
    };
    let cfg = riskplan::reduced_set::CemConfig {
        seed: a.seed,
        ..ctx.settings.cem.clone()
    };
    let outcome = reduce_with_candidates(&set, a.n_prime, &cfg, &[])?;
    let gap = embedding_gap(&set, &outcome.reduced)?;
    eprintln!(
        "reduced {} -> {} samples, sigma {:.4}, embedding gap {:.3e}",
        set.len(),
        a.n_prime,
        outcome.reduced.sigma,
        gap
    );
    let mut out = output(a.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &outcome.reduced)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn cmd_plan(ctx: &Env, a: &PlanArgs) -> Result<()> {
    let cfg = RunConfig {
        scenario: ctx.scenario(&a.scenario)?,
        risk: a.risk,
        n_prime: a.n_prime,
        seed: a.seed,
        variant: a.selection.variant_for(a.risk),
        settings: ctx.settings.clone(),
    };
    let outcome = run_scene(&cfg);
    let r = &outcome.record;
    if !r.is_ok() {
        bail!("{} seed {}: {}", r.scenario, r.seed, r.status);
    }
    println!(
        "{} risk={} n'={} seed={} variant={}: collision rate {:.4}, risk {:.3e}, residual {:.3e}, cost {:.3}, b=({:.3}, {:.3}), reduce {:.1} ms, plan {:.1} ms",
        r.scenario,
        r.risk,
        r.n_prime,
        r.seed,
        r.variant,
        r.collision_rate,
        r.final_risk,
        r.final_residual,
        r.final_cost,
        r.behavior_d,
        r.behavior_v,
        outcome.timing.reduce_ms,
        outcome.timing.plan_ms
    );
    if let Some(path) = &a.out {
        let dump = TrajectoryDump::from_outcome(&outcome).context("plan produced no trajectory")?;
        let mut out = output(Some(path))?;
        serde_json::to_writer_pretty(&mut out, &dump)?;
        writeln!(out)?;
        out.flush()?;
    }
    Ok(())
}

fn cmd_benchmark(ctx: &Env, a: &BenchmarkArgs) -> Result<()> {
    let scenarios = a
        .scenario
        .iter()
        .map(|s| ctx.scenario(s))
        .collect::<Result<Vec<_>>>()?;
    let sweep = SweepConfig {
        scenarios,
        risks: a.risk.clone(),
        n_primes: a.n_prime.clone(),
        seeds: a.seeds.0.clone(),
        variants: vec![
            Variant::Standard,
            Variant::RandomReducedSet,
            Variant::BaselineReducedSet,
        ],
        settings: ctx.settings.clone(),
    };
    let runs: Vec<RunConfig> = sweep
        .runs()
        .into_iter()
        .filter(|r| r.variant == a.selection.variant_for(r.risk))
        .collect();
    let (report, outcomes) = run_many(&runs, a.workers)?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_records_csv(a.out.join("records.csv"), &report.records)?;
    write_aggregates_json(a.out.join("aggregates.json"), &report.aggregates)?;
    write_timings_csv(a.out.join("timings.csv"), &outcomes)?;
    if a.trajectories {
        write_trajectories_jsonl(a.out.join("trajectories.jsonl"), &outcomes)?;
    }

    println!(
        "{:<22} {:<9} {:>3} {:<21} {:>5} {:>8} {:>8} {:>8}",
        "scenario", "risk", "n'", "variant", "runs", "median", "q3", "max"
    );
    for ag in &report.aggregates {
        let (median, q3, max) = ag
            .collision_rate
            .as_ref()
            .map(|s| {
                (
                    format!("{:.4}", s.median),
                    format!("{:.4}", s.q3),
                    format!("{:.4}", s.max),
                )
            })
            .unwrap_or_else(|| ("-".into(), "-".into(), "-".into()));
        println!(
            "{:<22} {:<9} {:>3} {:<21} {:>5} {:>8} {:>8} {:>8}",
            ag.scenario,
            ag.risk.as_str(),
            ag.n_prime,
            ag.variant.as_str(),
            ag.runs,
            median,
            q3,
            max
        );
    }
    let failures: usize = report.aggregates.iter().map(|ag| ag.failures).sum();
    if failures > 0 {
        eprintln!("{failures} run(s) failed; see the status column of records.csv");
    }
    Ok(())
}

fn cmd_mpc(ctx: &Env, a: &MpcArgs) -> Result<()> {
    let spec = ctx.scenario(&a.scenario)?;
    let log = mpc_drive(&spec, a.seed, a.cycles, a.risk, a.n_prime, &ctx.settings)?;
    let mut out = output(a.out.as_deref())?;
    for cycle in &log.cycles {
        serde_json::to_writer(&mut out, cycle)?;
        writeln!(out)?;
    }
    out.flush()?;
    let f = &log.final_state;
    eprintln!(
        "{} cycles: final s {:.2} d {:.2} v {:.2}",
        log.cycles.len(),
        f.s,
        f.d,
        f.v
    );
    Ok(())
}

fn cmd_scenario(ctx: &Env, c: &ScenarioCommand) -> Result<()> {
    match c {
        ScenarioCommand::Validate { paths } => {
            let mut bad = 0;
            for path in paths {
                match ScenarioSpec::load(path) {
                    Ok(spec) => println!(
                        "{}: ok ({}, {} obstacle(s))",
                        path.display(),
                        spec.name,
                        spec.obstacles.len()
                    ),
                    Err(e) => {
                        bad += 1;
                        println!("{}: {e}", path.display());
                    }
                }
            }
            if bad > 0 {
                bail!("{bad} invalid scenario file(s)");
            }
        }
        ScenarioCommand::Show { name } => println!("{}", ctx.scenario(name)?.to_json()?),
        ScenarioCommand::List => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
        }
    }
    Ok(())
}
