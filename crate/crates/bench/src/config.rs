//! Experiment configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pisto::{Method64, PistoSettings, Schedule64, Smoothing, WeightVariant};
use serde::{Deserialize, Serialize};

use pisto::CostKind;

pub const METHOD_NAMES: [&str; 4] = ["pisto", "stomp", "cem", "mppi"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PistoOptions {
    pub elite_fraction: f64,
    /// Momentum EMA coefficient.
    pub beta: f64,
    /// Momentum step size.
    pub lambda: f64,
    pub variant: WeightVariant,
}

impl Default for PistoOptions {
    fn default() -> Self {
        Self { elite_fraction: 0.5, beta: 0.7, lambda: 1.0, variant: WeightVariant::Algorithm }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CemOptions {
    pub elite_fraction: f64,
}

impl Default for CemOptions {
    fn default() -> Self {
        Self { elite_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MppiOptions {
    pub lambda: f64,
}

impl Default for MppiOptions {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

/// Knobs for scene (planning) tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanningOptions {
    pub n_free: usize,
    pub prior_dt: f64,
    pub ridge: f64,
    pub cost: CostKind,
    /// Adds a hinge on the distance to the workspace border to the cost.
    pub bounds_penalty: bool,
}

impl Default for PlanningOptions {
    fn default() -> Self {
        Self { n_free: 30, prior_dt: 1.0, ridge: 0.0, cost: CostKind::Sdf, bounds_penalty: true }
    }
}

/// Knobs for rollout (control) tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlOptions {
    pub prior_dt: f64,
    pub ridge: f64,
    pub horizon: Option<usize>,
    pub dt: Option<f64>,
    pub u_min: Option<Vec<f64>>,
    pub u_max: Option<Vec<f64>>,
    pub x0: Option<Vec<f64>>,
    /// Named model coefficients, e.g. `{"w_u": 0.01}`.
    pub params: std::collections::BTreeMap<String, f64>,
}

impl Default for ControlOptions {
    fn default() -> Self {
        Self {
            prior_dt: 1.0,
            ridge: 0.0,
            horizon: None,
            dt: None,
            u_min: None,
            u_max: None,
            x0: None,
            params: Default::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Scene files, directories of scene files, or built-in model names.
    pub tasks: Vec<String>,
    pub methods: Vec<String>,
    pub seeds: Vec<u64>,
    pub samples: usize,
    pub iterations: usize,
    pub sigma_init: f64,
    pub sigma_final: f64,
    pub eta_init: f64,
    pub eta_final: f64,
    pub tau: f64,
    pub pisto: PistoOptions,
    pub cem: CemOptions,
    pub mppi: MppiOptions,
    pub planning: PlanningOptions,
    pub control: ControlOptions,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            tasks: Vec::new(),
            methods: vec!["pisto".into()],
            seeds: vec![0],
            samples: 64,
            iterations: 100,
            sigma_init: 1e-3,
            sigma_final: 1e-5,
            eta_init: 1.0,
            eta_final: 100.0,
            tau: 1.0,
            pisto: PistoOptions::default(),
            cem: CemOptions::default(),
            mppi: MppiOptions::default(),
            planning: PlanningOptions::default(),
            control: ControlOptions::default(),
            output: PathBuf::from("results.csv"),
        }
    }
}

impl ExperimentConfig {
    /// Reads a JSON config; relative task and output paths are resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for t in &mut cfg.tasks {
            if pisto::BuiltinModel::<f64>::by_name(t).is_none() && Path::new(t.as_str()).is_relative() {
                *t = base.join(t.as_str()).to_string_lossy().into_owned();
            }
        }
        if cfg.output.is_relative() {
            cfg.output = base.join(&cfg.output);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            bail!("config lists no tasks");
        }
        if self.seeds.is_empty() {
            bail!("seed list is empty");
        }
        if self.methods.is_empty() {
            bail!("config lists no methods");
        }
        for m in &self.methods {
            self.method(m)?;
        }
        self.schedule().validate()?;
        if self.samples == 0 {
            bail!("samples must be >= 1");
        }
        Ok(())
    }

    pub fn schedule(&self) -> Schedule64 {
        Schedule64 {
            eta_init: self.eta_init,
            eta_final: self.eta_final,
            tau: self.tau,
            sigma_init: self.sigma_init,
            sigma_final: self.sigma_final,
            k_max: self.iterations,
        }
    }

    pub fn method(&self, name: &str) -> Result<Method64> {
        let method = match name {
            "pisto" => Method64::Pisto(PistoSettings {
                elite_fraction: self.pisto.elite_fraction,
                smoothing: Smoothing::Momentum { beta: self.pisto.beta, lambda: self.pisto.lambda },
                variant: self.pisto.variant,
            }),
            "stomp" => Method64::Stomp,
            "cem" => Method64::Cem { elite_fraction: self.cem.elite_fraction },
            "mppi" => Method64::Mppi { lambda: self.mppi.lambda },
            other => bail!("unknown method {other:?}; expected one of {}", METHOD_NAMES.join(", ")),
        };
        Ok(method)
    }
}
