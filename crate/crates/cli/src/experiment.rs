//! Batch evaluation of controllers over shared episode seeds.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use catmouse::control::{build_controller, run_episode, ControllerKind};
use catmouse::env::{metrics, CatSource, Environment};
use catmouse::ephemeris::ScenarioTrack;
use catmouse::policy::PolicyWeights;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

/// One evaluated episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub controller: String,
    pub base_seed: u64,
    pub run: usize,
    pub episode_seed: u64,
    pub steps: usize,
    pub total_reward: f64,
    pub steps_within_tol: usize,
    pub total_fuel: f64,
    pub mean_deviation: f64,
    pub max_deviation: f64,
    pub cutoff: bool,
    pub raw_rms: Option<f64>,
    pub filtered_rms: Option<f64>,
}

/// Per-controller aggregate over every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub controller: String,
    pub episodes: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub mean_steps_within_tol: f64,
    pub mean_fuel: f64,
    pub mean_deviation: f64,
    pub cutoff_fraction: f64,
    pub mean_raw_rms: Option<f64>,
    pub mean_filtered_rms: Option<f64>,
}

impl SummaryRow {
    pub fn ci_overlaps(&self, other: &SummaryRow) -> bool {
        self.ci95_low <= other.ci95_high && other.ci95_low <= self.ci95_high
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub summary: Vec<SummaryRow>,
    pub runs: Vec<RunRow>,
}

impl ExperimentOutput {
    pub fn summary_for(&self, kind: ControllerKind) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.controller == kind.as_str())
    }
}

/// Episode seeds derived from one base seed; identical for every controller.
pub fn episode_seeds(base_seed: u64, runs: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    (0..runs).map(|_| rng.random()).collect()
}

fn cat_source(cfg: &ExperimentConfig) -> Result<CatSource> {
    Ok(match &cfg.scenario {
        Some(path) => {
            CatSource::Track(ScenarioTrack::load(path).with_context(|| format!("loading scenario {}", path.display()))?)
        }
        None => CatSource::Synthetic,
    })
}

fn load_policy(cfg: &ExperimentConfig) -> Result<Option<PolicyWeights>> {
    cfg.policy
        .as_ref()
        .map(|p| PolicyWeights::load(p).with_context(|| format!("loading policy {}", p.display())))
        .transpose()
}

pub fn log_file_name(kind: ControllerKind, base_seed: u64, run: usize) -> String {
    format!("{}_seed{}_run{:04}.csv", kind.as_str(), base_seed, run)
}

/// Runs every (controller, seed, run) combination. When `log_dir` is set,
/// each episode's step log is written there as it finishes.
pub fn run_experiment(cfg: &ExperimentConfig, log_dir: Option<&Path>) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let source = cat_source(cfg)?;
    let weights = load_policy(cfg)?;
    if let Some(dir) = log_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut jobs = Vec::new();
    for &kind in &cfg.controllers {
        for &base in &cfg.seeds {
            for (run, seed) in episode_seeds(base, cfg.runs).into_iter().enumerate() {
                jobs.push((kind, base, run, seed));
            }
        }
    }
    let work = || -> Result<Vec<RunRow>> {
        jobs.par_iter()
            .map(|&(kind, base, run, seed)| -> Result<RunRow> {
                let mut env = Environment::new(cfg.episode.clone(), source.clone())?;
                let mut ctrl = build_controller(kind, &env, &cfg.controller, weights.as_ref())?;
                let log = run_episode(&mut env, ctrl.as_mut(), seed)
                    .with_context(|| format!("{} seed {base} run {run}", kind.as_str()))?;
                if let Some(dir) = log_dir {
                    log.save(dir.join(log_file_name(kind, base, run)))?;
                }
                let m = metrics(&log)?;
                Ok(RunRow {
                    controller: kind.as_str().to_string(),
                    base_seed: base,
                    run,
                    episode_seed: seed,
                    steps: m.steps,
                    total_reward: m.total_reward,
                    steps_within_tol: m.steps_within_tol,
                    total_fuel: m.total_fuel,
                    mean_deviation: m.mean_deviation,
                    max_deviation: m.max_deviation,
                    cutoff: m.cutoff,
                    raw_rms: m.raw_rms,
                    filtered_rms: m.filtered_rms,
                })
            })
            .collect()
    };
    let runs = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(work)?,
        None => work()?,
    };
    let summary = cfg
        .controllers
        .iter()
        .map(|k| summarize(k.as_str(), runs.iter().filter(|r| r.controller == k.as_str())))
        .collect();
    Ok(ExperimentOutput { summary, runs })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn mean_of_some<'a>(v: impl Iterator<Item = &'a Option<f64>>) -> Option<f64> {
    let xs: Vec<f64> = v.flatten().copied().collect();
    (!xs.is_empty()).then(|| mean(&xs))
}

/// Mean, sample standard deviation and normal-approximation 95% interval.
pub fn summarize<'a>(controller: &str, rows: impl Iterator<Item = &'a RunRow>) -> SummaryRow {
    let rows: Vec<&RunRow> = rows.collect();
    let n = rows.len();
    let rewards: Vec<f64> = rows.iter().map(|r| r.total_reward).collect();
    let m = if n > 0 { mean(&rewards) } else { f64::NAN };
    let std = if n > 1 {
        (rewards.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let half = 1.96 * std / (n.max(1) as f64).sqrt();
    let avg = |f: &dyn Fn(&RunRow) -> f64| mean(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
    SummaryRow {
        controller: controller.to_string(),
        episodes: n,
        mean_reward: m,
        std_reward: std,
        ci95_low: m - half,
        ci95_high: m + half,
        mean_steps_within_tol: avg(&|r| r.steps_within_tol as f64),
        mean_fuel: avg(&|r| r.total_fuel),
        mean_deviation: avg(&|r| r.mean_deviation),
        cutoff_fraction: avg(&|r| if r.cutoff { 1.0 } else { 0.0 }),
        mean_raw_rms: mean_of_some(rows.iter().map(|r| &r.raw_rms)),
        mean_filtered_rms: mean_of_some(rows.iter().map(|r| &r.filtered_rms)),
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Paths written by [`run_and_write`].
#[derive(Debug, Clone)]
pub struct OutputPaths {
    pub results: PathBuf,
    pub runs: PathBuf,
    pub logs: Option<PathBuf>,
}

/// Runs the experiment and writes `results.csv`, `runs.csv` and, when
/// enabled, `logs/*.csv` under the output directory.
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<(ExperimentOutput, OutputPaths)> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let logs = cfg.write_logs.then(|| dir.join("logs"));
    let out = run_experiment(cfg, logs.as_deref())?;
    let paths = OutputPaths {
        results: dir.join("results.csv"),
        runs: dir.join("runs.csv"),
        logs,
    };
    write_rows(&paths.results, &out.summary)?;
    write_rows(&paths.runs, &out.runs)?;
    Ok((out, paths))
}
