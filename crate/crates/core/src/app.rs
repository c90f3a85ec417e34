//! Command-line runner: `collect`, `run` and `bench`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{data_seed, ExperimentConfig, RunEntry};
use crate::control::update_equilibrium;
use crate::data::{collect_offline_data, min_data_length, write_dataset_csv, TrajectoryDataset};
use crate::error::Error;
use crate::disturbance::Downsampling;
use crate::robust::{program_size, reformulate, Backend, RobustMethod};
use crate::sim::{
    simulate, write_metrics_json, write_plot_data, write_result_csv, Metrics, SimResult, Strategy,
};
use crate::traffic::{Scope, TrafficConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_EXCITATION: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "mixflow", version, about = "Robust data-driven control of mixed traffic platoons")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Record offline datasets.
    Collect(CommonArgs),
    /// Run the configured experiment over its seed ensemble.
    Run(CommonArgs),
    /// Time the per-step controller solves.
    Bench(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Experiment file; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base seed, overriding the file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for ensembles.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Validate and print the plan without running anything.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Lib(#[from] Error),
    #[error("{fallbacks} of {decisions} controller steps fell back, above the allowed fraction {limit}")]
    SolverThreshold { fallbacks: usize, decisions: usize, limit: f64 },
    #[error("dataset {0} is not persistently exciting")]
    Excitation(String),
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Lib(Error::Io(e))
    }
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Lib(Error::Config(_) | Error::UnknownBackend(_)) => EXIT_CONFIG,
            AppError::Lib(Error::NotPersistentlyExciting { .. } | Error::InsufficientData { .. }) => EXIT_EXCITATION,
            AppError::Excitation(_) => EXIT_EXCITATION,
            AppError::SolverThreshold { .. } => EXIT_SOLVER,
            AppError::Lib(_) => EXIT_FAILURE,
        }
    }
}

/// Parse-free entry point; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Collect(a) => load(a).and_then(|c| cmd_collect(&c, a)),
        Command::Run(a) => load(a).and_then(|c| cmd_run(&c, a).map(|_| ())),
        Command::Bench(a) => load(a).and_then(|c| cmd_bench(&c, a).map(|_| ())),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Configuration with command-line and environment overrides applied.
pub fn load(args: &CommonArgs) -> Result<ExperimentConfig, AppError> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.experiment.base_seed = s;
    }
    cfg.controller.backend = Backend::from_env()?;
    Ok(cfg)
}

fn prepare_out(cfg: &ExperimentConfig, args: &CommonArgs) -> Result<(), AppError> {
    fs::create_dir_all(&args.out)?;
    let target = args.out.join("config.toml");
    match &args.config {
        Some(p) => {
            fs::copy(p, target)?;
        }
        None => fs::write(target, cfg.to_toml()?)?,
    }
    Ok(())
}

fn pool(args: &CommonArgs) -> Result<rayon::ThreadPool, AppError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = args.workers {
        b = b.num_threads(w.max(1));
    }
    b.build().map_err(|e| AppError::Lib(Error::Config(format!("cannot start workers: {e}"))))
}

pub fn scope_name(scope: Scope) -> String {
    match scope {
        Scope::Global => "global".into(),
        Scope::Subsystem(i) => format!("subsystem_{}", i + 1),
    }
}

/// Minimum data length and program sizes of each scope, one line each.
pub fn plan_lines(cfg: &ExperimentConfig, traffic: &TrafficConfig, scopes: &[Scope]) -> Result<Vec<String>, AppError> {
    let c = &cfg.controller;
    let n_eps = Downsampling::new(c.horizon, c.downsample_period)?.knot_count();
    let vertices = 1usize << n_eps;
    Ok(scopes
        .iter()
        .map(|&scope| {
            let lay = scope.layout(traffic);
            let (q, p) = (lay.input_dim(), lay.output_dim());
            let min_len = min_data_length(q, lay.state_dim(), c.t_ini + c.horizon);
            let size = |m| program_size(m, q * c.horizon, p * c.t_ini, n_eps, lay.cavs.len() * c.horizon, vertices);
            let (vv, vc) = size(RobustMethod::Vertex);
            let (dv, dc) = size(RobustMethod::Duality);
            format!(
                "  {}: min data length {min_len}, {n_eps} knots; vertex {vv} variables / {vc} constraints; duality {dv} / {dc}",
                scope_name(scope)
            )
        })
        .collect())
}

/// Record one dataset per configured scope into `<out>/data`.
pub fn cmd_collect(cfg: &ExperimentConfig, args: &CommonArgs) -> Result<(), AppError> {
    let traffic = cfg.platoon.traffic_config()?;
    let scopes = cfg.data.scopes(&traffic);
    let seed = data_seed(cfg.experiment.base_seed, cfg.data.seed);
    if args.dry_run {
        println!("collect {} samples for {} scope(s), seed {seed}", cfg.data.length, scopes.len());
        for line in plan_lines(cfg, &traffic, &scopes)? {
            println!("{line}");
        }
        return Ok(());
    }
    prepare_out(cfg, args)?;
    let dir = args.out.join("data");
    fs::create_dir_all(&dir)?;
    let opts = cfg.data.options(&cfg.controller);
    let mut weak = Vec::new();
    for (k, scope) in scopes.into_iter().enumerate() {
        let d = collect_offline_data(&traffic, scope, cfg.data.length, seed * 1009 + k as u64, &opts)?;
        let path = dir.join(format!("{}.csv", scope_name(scope)));
        write_dataset_csv(&d, &path)?;
        let pe = d.pe.as_ref();
        println!(
            "{}: {} samples, excitation rank {}/{}",
            path.display(),
            d.len(),
            pe.map_or(0, |p| p.rank),
            pe.map_or(0, |p| p.rows)
        );
        if !pe.is_some_and(|p| p.satisfied) {
            weak.push(scope_name(scope));
        }
    }
    if !weak.is_empty() {
        return Err(AppError::Excitation(weak.join(", ")));
    }
    Ok(())
}

/// Ensemble statistics of one run label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub strategy: Strategy,
    pub seeds: usize,
    pub msve_mean: f64,
    pub msve_std: f64,
    /// Relative MSVE reduction against the baseline, when one is configured.
    pub msve_reduction: Option<f64>,
    pub fuel_mean: f64,
    pub fuel_reduction: Option<f64>,
    pub violation_rate: f64,
    pub emergency_rate: f64,
    pub mean_step_time: f64,
    pub max_step_time: f64,
    pub fallback_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub summary: Vec<RunSummary>,
    pub runs: Vec<Metrics>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn summarize(cfg: &ExperimentConfig, metrics: &[(usize, Metrics)]) -> Vec<RunSummary> {
    let mut out: Vec<RunSummary> = cfg
        .experiment
        .runs
        .iter()
        .enumerate()
        .map(|(r, entry)| {
            let ms: Vec<&Metrics> = metrics.iter().filter(|(i, _)| *i == r).map(|(_, m)| m).collect();
            let msve: Vec<f64> = ms.iter().map(|m| m.msve).collect();
            let m_mean = mean(&msve);
            let var = mean(&msve.iter().map(|x| (x - m_mean).powi(2)).collect::<Vec<_>>());
            let n = ms.len().max(1) as f64;
            let decisions: usize = ms.iter().map(|m| m.decisions).sum();
            let fallbacks: usize = ms.iter().map(|m| m.fallbacks).sum();
            RunSummary {
                label: entry.label.clone(),
                strategy: entry.strategy,
                seeds: ms.len(),
                msve_mean: m_mean,
                msve_std: var.sqrt(),
                msve_reduction: None,
                fuel_mean: mean(&ms.iter().map(|m| m.fuel_total).collect::<Vec<_>>()),
                fuel_reduction: None,
                violation_rate: ms.iter().filter(|m| m.violation).count() as f64 / n,
                emergency_rate: ms.iter().filter(|m| m.emergency).count() as f64 / n,
                mean_step_time: mean(&ms.iter().map(|m| m.mean_solve_time).collect::<Vec<_>>()),
                max_step_time: ms.iter().map(|m| m.max_solve_time).fold(0.0, f64::max),
                fallback_fraction: if decisions == 0 { 0.0 } else { fallbacks as f64 / decisions as f64 },
            }
        })
        .collect();
    if let Some(base) = &cfg.experiment.baseline {
        if let Some(b) = out.iter().find(|s| &s.label == base).cloned() {
            for s in &mut out {
                if b.msve_mean > 0.0 {
                    s.msve_reduction = Some(1.0 - s.msve_mean / b.msve_mean);
                }
                if b.fuel_mean > 0.0 {
                    s.fuel_reduction = Some(1.0 - s.fuel_mean / b.fuel_mean);
                }
            }
        }
    }
    out
}

type DatasetKey = (Strategy, usize);

/// Simulate every run entry for one seed, sharing datasets between entries
/// with the same strategy and data length.
pub fn run_seed(
    cfg: &ExperimentConfig,
    traffic: &TrafficConfig,
    seed: u64,
) -> Result<Vec<SimResult>, AppError> {
    let scenario = cfg.scenario.scenario(seed)?;
    let mut cache: HashMap<DatasetKey, Vec<TrajectoryDataset>> = HashMap::new();
    let mut results = Vec::with_capacity(cfg.experiment.runs.len());
    for entry in &cfg.experiment.runs {
        let spec = cfg.run_spec(entry, seed);
        let key = (entry.strategy, spec.data_length);
        if !cache.contains_key(&key) {
            cache.insert(key, spec.collect(traffic)?);
        }
        let mut controllers = spec.build_controllers(traffic, &cache[&key])?;
        let mut r = simulate(traffic, &scenario, entry.strategy, &spec.settings, &mut controllers)?;
        r.scenario = format!("{}/{}", scenario.name, entry.label);
        results.push(r);
    }
    Ok(results)
}

/// Run every entry over the seed ensemble and write trajectories, plot data
/// and `metrics.json` into the output directory.
pub fn cmd_run(cfg: &ExperimentConfig, args: &CommonArgs) -> Result<RunReport, AppError> {
    let traffic = cfg.platoon.traffic_config()?;
    let seeds: Vec<u64> = (0..cfg.experiment.seeds as u64).map(|k| cfg.experiment.base_seed + k).collect();
    if args.dry_run {
        println!(
            "run {} entries x {} seeds on `{}` ({} s)",
            cfg.experiment.runs.len(),
            seeds.len(),
            cfg.scenario.name,
            cfg.scenario.scenario(0)?.duration
        );
        for e in &cfg.experiment.runs {
            println!("  {} ({})", e.label, e.strategy.label());
        }
        let traffic = cfg.platoon.traffic_config()?;
        let mut scopes = Strategy::Decentralized.scopes(&traffic);
        scopes.push(Scope::Global);
        for line in plan_lines(cfg, &traffic, &scopes)? {
            println!("{line}");
        }
        return Ok(RunReport { summary: Vec::new(), runs: Vec::new() });
    }
    prepare_out(cfg, args)?;
    let per_seed: Vec<Result<Vec<SimResult>, AppError>> =
        pool(args)?.install(|| seeds.par_iter().map(|&s| run_seed(cfg, &traffic, s)).collect());
    let mut metrics = Vec::new();
    for (k, res) in per_seed.into_iter().enumerate() {
        for (r, result) in res?.into_iter().enumerate() {
            let label = &cfg.experiment.runs[r].label;
            let stem = format!("{label}_seed{}", seeds[k]);
            if cfg.experiment.write_trajectories {
                let dir = args.out.join("runs");
                fs::create_dir_all(&dir)?;
                write_result_csv(&result, &dir.join(format!("{stem}.csv")))?;
            }
            if cfg.experiment.write_plots && k == 0 {
                write_plot_data(&result, &args.out.join("plots").join(&stem))?;
            }
            metrics.push((r, Metrics::from_result(&result, traffic.s_min, traffic.s_max)));
        }
    }
    let summary = summarize(cfg, &metrics);
    let report = RunReport { summary, runs: metrics.into_iter().map(|(_, m)| m).collect() };
    write_metrics_json(&report, &args.out.join("metrics.json"))?;
    write_summary_csv(&report.summary, &args.out.join("summary.csv"))?;
    print_summary(&report.summary);
    let decisions: usize = report.runs.iter().map(|m| m.decisions).sum();
    let fallbacks: usize = report.runs.iter().map(|m| m.fallbacks).sum();
    if decisions > 0 && fallbacks as f64 / decisions as f64 > cfg.experiment.max_fallback_fraction {
        return Err(AppError::SolverThreshold { fallbacks, decisions, limit: cfg.experiment.max_fallback_fraction });
    }
    Ok(report)
}

fn write_summary_csv(summary: &[RunSummary], path: &Path) -> Result<(), AppError> {
    let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
    for s in summary {
        w.serialize(s).map_err(Error::from)?;
    }
    w.flush()?;
    Ok(())
}

fn pct(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{:.1}%", 100.0 * v))
}

fn print_summary(summary: &[RunSummary]) {
    println!(
        "{:<24} {:>9} {:>8} {:>10} {:>8} {:>6} {:>6} {:>10}",
        "run", "msve", "red.", "fuel (mL)", "red.", "viol", "emerg", "step (ms)"
    );
    for s in summary {
        println!(
            "{:<24} {:>9.4} {:>8} {:>10.1} {:>8} {:>5.0}% {:>5.0}% {:>10.3}",
            s.label,
            s.msve_mean,
            pct(s.msve_reduction),
            s.fuel_mean,
            pct(s.fuel_reduction),
            100.0 * s.violation_rate,
            100.0 * s.emergency_rate,
            1e3 * s.mean_step_time
        );
    }
}

/// Timing and program size of one controller variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub label: String,
    pub controllers: usize,
    pub mean_step_time: f64,
    pub max_step_time: f64,
    /// Variables and constraints of the vertex and duality forms of the
    /// first controller's program at the end of the run.
    pub vertex_size: Option<(usize, usize)>,
    pub duality_size: Option<(usize, usize)>,
}

/// Simulate each controlled entry for `bench.duration` seconds and report
/// per-step solve times.
pub fn cmd_bench(cfg: &ExperimentConfig, args: &CommonArgs) -> Result<Vec<BenchEntry>, AppError> {
    let traffic = cfg.platoon.traffic_config()?;
    let entries: Vec<&RunEntry> = cfg.experiment.runs.iter().filter(|e| e.strategy != Strategy::AllHdv).collect();
    if args.dry_run {
        println!("bench {} entries for {} s x {}", entries.len(), cfg.bench.duration, cfg.bench.repeats);
        return Ok(Vec::new());
    }
    prepare_out(cfg, args)?;
    let seed = cfg.experiment.base_seed;
    let mut scenario = cfg.scenario.scenario(seed)?;
    scenario.duration = cfg.bench.duration;
    let mut out = Vec::new();
    for entry in entries {
        let spec = cfg.run_spec(entry, seed);
        let datasets = spec.collect(&traffic)?;
        let mut times = Vec::new();
        let mut sizes = (None, None);
        for _ in 0..cfg.bench.repeats.max(1) {
            let mut controllers = spec.build_controllers(&traffic, &datasets)?;
            let r = simulate(&traffic, &scenario, entry.strategy, &spec.settings, &mut controllers)?;
            times.extend(r.step_time);
            if let Some(c) = controllers.first() {
                let eq = update_equilibrium(&[r.velocity.last().map_or(15.0, |v| v[0])], &traffic);
                if let Ok((qp, knots)) = c.current_qp(&eq) {
                    let size = |m| {
                        reformulate(qp.clone(), &knots, m).ok().map(|p| (p.variable_count(), p.constraint_count()))
                    };
                    sizes = (size(RobustMethod::Vertex), size(RobustMethod::Duality));
                }
            }
        }
        let e = BenchEntry {
            label: entry.label.clone(),
            controllers: spec.strategy.scopes(&traffic).len(),
            mean_step_time: mean(&times),
            max_step_time: times.iter().cloned().fold(0.0, f64::max),
            vertex_size: sizes.0,
            duality_size: sizes.1,
        };
        println!(
            "{:<24} {:>2} controller(s)  mean {:>8.3} ms  max {:>8.3} ms",
            e.label,
            e.controllers,
            1e3 * e.mean_step_time,
            1e3 * e.max_step_time
        );
        out.push(e);
    }
    write_metrics_json(&out, &args.out.join("bench.json"))?;
    Ok(out)
}
