//! Runs every (task, method, seed) combination and persists the results.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use pisto::nalgebra::DMatrix;
use pisto::{IterationRecord, Optimizer, OptimizerConfig, Problem};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::task::{load_tasks, Evaluation, Task, TaskKind};

/// Column order of the results file.
pub const CSV_HEADER: [&str; 21] = [
    "row_type",
    "task",
    "method",
    "seed",
    "iteration",
    "best_cost",
    "mean_cost",
    "sigma_k",
    "eta_k",
    "update_norm",
    "uniform_fallback",
    "diverged_samples",
    "status",
    "final_cost",
    "success",
    "path_length",
    "clearance",
    "terminal_error",
    "iterations_run",
    "wall_time_ms",
    "solution_file",
];

pub const ROW_ITERATION: &str = "iteration";
pub const ROW_SUMMARY: &str = "summary";

/// One CSV line. Iteration rows leave the summary columns empty and vice versa.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CsvRow {
    pub row_type: String,
    pub task: String,
    pub method: String,
    pub seed: u64,
    pub iteration: Option<usize>,
    pub best_cost: Option<f64>,
    pub mean_cost: Option<f64>,
    pub sigma_k: Option<f64>,
    pub eta_k: Option<f64>,
    pub update_norm: Option<f64>,
    pub uniform_fallback: Option<bool>,
    pub diverged_samples: Option<usize>,
    pub status: Option<String>,
    pub final_cost: Option<f64>,
    pub success: Option<bool>,
    pub path_length: Option<f64>,
    pub clearance: Option<f64>,
    pub terminal_error: Option<f64>,
    pub iterations_run: Option<usize>,
    pub wall_time_ms: Option<f64>,
    pub solution_file: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub best: DMatrix<f64>,
    pub best_cost: f64,
    pub final_mean: DMatrix<f64>,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub task: String,
    pub method: String,
    pub seed: u64,
    pub history: Vec<IterationRecord<f64>>,
    /// `Err` holds the abort diagnostic.
    pub outcome: std::result::Result<RunOutcome, String>,
    pub wall_time_ms: f64,
}

impl RunRecord {
    pub fn aborted(&self) -> bool {
        self.outcome.is_err()
    }
}

/// Sidecar file with the reported solution of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub task: String,
    pub method: String,
    pub seed: u64,
    /// `path` (planar nodes including endpoints) or `controls`.
    pub kind: String,
    pub points: Vec<Vec<f64>>,
    /// Rollout states for control tasks.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub states: Option<Vec<Vec<f64>>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn run_single(task: &Task, cfg: &ExperimentConfig, method: &str, seed: u64) -> Result<RunRecord> {
    let config = OptimizerConfig { samples: cfg.samples, schedule: cfg.schedule(), method: cfg.method(method)?, seed };
    let started = Instant::now();
    let problem = Problem { cost: |y: &DMatrix<f64>| task.cost(y), prior: &task.prior, initial: task.initial_mean() };
    let mut history = Vec::new();
    let outcome = match Optimizer::new(problem, config) {
        Err(e) => Err(e.to_string()),
        Ok(mut opt) => {
            let mut failure = None;
            while !opt.is_done() {
                if let Err(e) = opt.step() {
                    failure = Some(e.to_string());
                    break;
                }
            }
            history = opt.state().history.clone();
            match failure {
                Some(e) => Err(e),
                None => {
                    let res = opt.into_result();
                    task.evaluate(&res.best).map_err(|e| e.to_string()).map(|evaluation| RunOutcome {
                        best: res.best,
                        best_cost: res.best_cost,
                        final_mean: res.final_mean,
                        evaluation,
                    })
                }
            }
        }
    };
    Ok(RunRecord {
        task: task.name.clone(),
        method: method.to_string(),
        seed,
        history,
        outcome,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// All runs, in task × method × seed order. Runs execute concurrently.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(Vec<Task>, Vec<RunRecord>)> {
    cfg.validate()?;
    let tasks = load_tasks(cfg)?;
    let mut jobs = Vec::new();
    for (ti, _) in tasks.iter().enumerate() {
        for m in &cfg.methods {
            for &s in &cfg.seeds {
                jobs.push((ti, m.as_str(), s));
            }
        }
    }
    let records = jobs
        .par_iter()
        .map(|&(ti, m, s)| run_single(&tasks[ti], cfg, m, s))
        .collect::<Result<Vec<_>>>()?;
    Ok((tasks, records))
}

/// Directory holding the sidecar files of `csv_path`.
pub fn solutions_dir(csv_path: &Path) -> PathBuf {
    let stem = csv_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "results".into());
    csv_path.with_file_name(format!("{stem}_solutions"))
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn iteration_row(r: &RunRecord, it: &IterationRecord<f64>) -> CsvRow {
    CsvRow {
        row_type: ROW_ITERATION.into(),
        task: r.task.clone(),
        method: r.method.clone(),
        seed: r.seed,
        iteration: Some(it.iteration),
        best_cost: Some(it.best_cost),
        mean_cost: Some(it.mean_cost),
        sigma_k: Some(it.sigma_k),
        eta_k: Some(it.eta_k),
        update_norm: Some(it.update_norm),
        uniform_fallback: Some(it.uniform_fallback),
        diverged_samples: Some(it.diverged_samples),
        ..Default::default()
    }
}

/// Writes the CSV and one sidecar JSON per completed run. Rows are written
/// in record order through a single writer.
pub fn write_results(csv_path: &Path, tasks: &[Task], records: &[RunRecord]) -> Result<()> {
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let sol_dir = solutions_dir(csv_path);
    let sol_rel = PathBuf::from(sol_dir.file_name().unwrap_or_default());
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(csv_path)
        .with_context(|| format!("creating {}", csv_path.display()))?;
    w.write_record(CSV_HEADER)?;
    for r in records {
        for it in &r.history {
            w.serialize(iteration_row(r, it))?;
        }
        let mut summary = CsvRow {
            row_type: ROW_SUMMARY.into(),
            task: r.task.clone(),
            method: r.method.clone(),
            seed: r.seed,
            iterations_run: Some(r.history.len()),
            wall_time_ms: Some(r.wall_time_ms),
            ..Default::default()
        };
        match &r.outcome {
            Err(msg) => {
                summary.status = Some(format!("aborted: {msg}"));
                summary.success = Some(false);
            }
            Ok(o) => {
                let task = tasks.iter().find(|t| t.name == r.task).context("record without task")?;
                let file = format!("{}__{}__seed{}.json", sanitize(&r.task), sanitize(&r.method), r.seed);
                fs::create_dir_all(&sol_dir).with_context(|| format!("creating {}", sol_dir.display()))?;
                let solution = task.solution(&o.best);
                let (kind, states) = match &task.kind {
                    TaskKind::Planning { .. } => ("path", None),
                    TaskKind::Control { model } => {
                        let roll = pisto::rollout(model, &pisto::Dynamics::initial_state(model), &solution)?;
                        ("controls", Some(rows_of(&roll.states)))
                    }
                };
                let side = SolutionFile {
                    task: r.task.clone(),
                    method: r.method.clone(),
                    seed: r.seed,
                    kind: kind.into(),
                    points: rows_of(&solution),
                    states,
                };
                let mut text = serde_json::to_string_pretty(&side)?;
                text.push('\n');
                fs::write(sol_dir.join(&file), text)?;
                let e = &o.evaluation;
                summary.status = Some("ok".into());
                summary.best_cost = Some(o.best_cost);
                summary.final_cost = Some(e.final_cost);
                summary.success = Some(e.success);
                summary.path_length = e.path_length;
                summary.clearance = e.clearance;
                summary.terminal_error = e.terminal_error;
                summary.solution_file = Some(sol_rel.join(file).to_string_lossy().into_owned());
            }
        }
        w.serialize(summary)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(csv_path: &Path) -> Result<Vec<CsvRow>> {
    let mut rdr = csv::Reader::from_path(csv_path).with_context(|| format!("opening {}", csv_path.display()))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        anyhow::bail!("{} does not carry the expected header", csv_path.display());
    }
    rdr.deserialize().map(|r| r.map_err(Into::into)).collect()
}
