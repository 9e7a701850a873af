//! Benchmark tasks: planning scenes and control-space rollouts.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use pisto::nalgebra::DMatrix;
use pisto::{
    build_acceleration_operator, build_prior, clamp_controls, rollout, BuiltinModel, CostKind, Dynamics,
    Endpoints, Model64, OperatorMode, Prior64, Scene64,
};

use crate::config::ExperimentConfig;
use crate::scenes::load_scene;

#[derive(Debug, Clone)]
pub enum TaskKind {
    Planning { scene: Scene64, cost: CostKind, bounds_penalty: bool },
    Control { model: Model64 },
}

#[derive(Debug, Clone)]
pub struct Task {
    /// Scene file stem or model name; unique within a run.
    pub name: String,
    pub kind: TaskKind,
    pub prior: Prior64,
}

/// What a finished run is judged on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub final_cost: f64,
    pub success: bool,
    pub path_length: Option<f64>,
    pub clearance: Option<f64>,
    /// Mean task error over the last ten rollout steps (control tasks).
    pub terminal_error: Option<f64>,
}

/// Angle error used to judge the pendulum and cart-pole tasks.
pub fn task_error(model: &Model64, x: &[f64]) -> f64 {
    match model {
        BuiltinModel::PendulumSwingup(p) => p.upright_error(x[0]),
        BuiltinModel::CartpoleBalance(_) => 2.0 * (1.0 - x[2].cos()),
        BuiltinModel::PointMass2d(m) => (x[0] - m.goal[0]).powi(2) + (x[1] - m.goal[1]).powi(2),
    }
}

const TERMINAL_WINDOW: usize = 10;

impl Task {
    pub fn n_dims(&self) -> usize {
        match &self.kind {
            TaskKind::Planning { .. } => 2,
            TaskKind::Control { model } => model.control_dim(),
        }
    }

    /// Straight line between the endpoints, or zero controls.
    pub fn initial_mean(&self) -> DMatrix<f64> {
        match &self.kind {
            TaskKind::Planning { .. } => self.prior.straight_line(2),
            TaskKind::Control { .. } => DMatrix::zeros(self.prior.n_free(), self.n_dims()),
        }
    }

    /// Cost `S` of a mean: potential of the free nodes, or rollout cost of the
    /// clamped controls.
    pub fn cost(&self, y: &DMatrix<f64>) -> f64 {
        match &self.kind {
            TaskKind::Planning { scene, cost, bounds_penalty } => {
                let s = scene.potential(y, *cost);
                if *bounds_penalty {
                    s + scene.bounds_potential(y)
                } else {
                    s
                }
            }
            TaskKind::Control { model } => {
                let u = clamp_controls(y, model);
                match rollout(model, &model.initial_state(), &u) {
                    Ok(r) => r.total,
                    Err(_) => f64::INFINITY,
                }
            }
        }
    }

    /// Full trajectory for planning tasks, clamped controls otherwise.
    pub fn solution(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.kind {
            TaskKind::Planning { .. } => self.prior.full_trajectory(y),
            TaskKind::Control { model } => clamp_controls(y, model),
        }
    }

    pub fn evaluate(&self, y: &DMatrix<f64>) -> Result<Evaluation> {
        match &self.kind {
            TaskKind::Planning { scene, .. } => {
                let m = scene.metrics(&self.prior.full_trajectory(y))?;
                Ok(Evaluation {
                    final_cost: self.cost(y),
                    success: m.success,
                    path_length: Some(m.path_length),
                    clearance: Some(m.clearance),
                    terminal_error: None,
                })
            }
            TaskKind::Control { model } => {
                let r = rollout(model, &model.initial_state(), &clamp_controls(y, model))?;
                let n = r.states.nrows();
                let window = TERMINAL_WINDOW.min(n - 1);
                let err = if r.diverged {
                    f64::INFINITY
                } else {
                    (n - window..n)
                        .map(|t| task_error(model, &r.states.row(t).iter().copied().collect::<Vec<_>>()))
                        .sum::<f64>()
                        / window as f64
                };
                let last: Vec<f64> = r.states.row(n - 1).iter().copied().collect();
                Ok(Evaluation {
                    final_cost: r.total,
                    success: !r.diverged && model.reached_goal(&last),
                    path_length: None,
                    clearance: None,
                    terminal_error: Some(err),
                })
            }
        }
    }
}

fn planning_task(name: String, scene: Scene64, cfg: &ExperimentConfig) -> Result<Task> {
    let p = &cfg.planning;
    let endpoints = Endpoints { start: scene.start.to_vec(), goal: scene.goal.to_vec() };
    let op = build_acceleration_operator(p.n_free, p.prior_dt, OperatorMode::Planning(endpoints))?;
    let prior = build_prior(op, p.ridge)?;
    Ok(Task { name, kind: TaskKind::Planning { scene, cost: p.cost, bounds_penalty: p.bounds_penalty }, prior })
}

fn control_task(mut model: Model64, cfg: &ExperimentConfig) -> Result<Task> {
    let c = &cfg.control;
    if let Some(h) = c.horizon {
        if h < 2 {
            bail!("control horizon must be >= 2");
        }
        model.set_horizon(h);
    }
    if let Some(dt) = c.dt {
        if !(dt > 0.0) {
            bail!("control dt must be > 0");
        }
        model.set_dt(dt);
    }
    match (&c.u_min, &c.u_max) {
        (Some(lo), Some(hi)) => model.set_bounds(lo.clone(), hi.clone())?,
        (None, None) => {}
        _ => bail!("u_min and u_max must be given together"),
    }
    if let Some(x0) = &c.x0 {
        model.set_initial_state(x0.clone())?;
    }
    for (k, v) in &c.params {
        model.set_param(k, *v)?;
    }
    let op = build_acceleration_operator(model.horizon(), c.prior_dt, OperatorMode::Control)?;
    let prior = build_prior(op, c.ridge)?;
    Ok(Task { name: model.name().to_string(), kind: TaskKind::Control { model }, prior })
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Expands every task entry of the config. Directories contribute their
/// `*.json` files in name order.
pub fn load_tasks(cfg: &ExperimentConfig) -> Result<Vec<Task>> {
    let mut tasks = Vec::new();
    for entry in &cfg.tasks {
        if let Some(model) = BuiltinModel::by_name(entry) {
            tasks.push(control_task(model, cfg)?);
            continue;
        }
        let path = Path::new(entry);
        if path.is_dir() {
            let mut files: Vec<_> = fs::read_dir(path)
                .with_context(|| format!("listing {}", path.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            if files.is_empty() {
                bail!("no scene files in {}", path.display());
            }
            for f in files {
                tasks.push(planning_task(stem(&f), load_scene(&f)?, cfg)?);
            }
        } else if path.is_file() {
            tasks.push(planning_task(stem(path), load_scene(path)?, cfg)?);
        } else {
            bail!("task {entry:?} is neither a built-in model ({}) nor an existing path", pisto::BUILTIN_MODEL_NAMES.join(", "));
        }
    }
    let mut names: Vec<&str> = tasks.iter().map(|t| t.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        bail!("task names must be unique");
    }
    Ok(tasks)
}
