//! Iterated sampling optimizer: PISTO and the STOMP, CEM and MPPI update rules.
//!
//! Every method shares the same loop. At iteration `k` the sampler draws `M`
//! perturbations from `N(0, σ_k R⁻¹)` around the current mean, the cost is
//! evaluated for each sample (in parallel), and the method-specific rule
//! produces the next mean. The lowest-objective mean seen so far is kept as
//! the reported solution; it never feeds back into the iteration.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{cem_update, mppi_update};
use crate::error::{invalid, Error, Result};
use crate::prior::{sample_perturbations, PerturbationBatch, SeedTag, SmoothnessPrior};
use crate::scalar::{count, Real};
use crate::schedule::{gamma, ProximalSchedule};
use crate::update::{momentum_step, weighted_update, Smoothing, SmoothingState};
use crate::weights::{elite_filter, pisto_weights, stomp_weights, WeightVariant, WeightVector};

/// State potential or rollout cost `S(·)` of a candidate mean.
pub trait CostFunction<T: Real>: Sync {
    fn cost(&self, y: &DMatrix<T>) -> T;
}

impl<T: Real, F> CostFunction<T> for F
where
    F: Fn(&DMatrix<T>) -> T + Sync,
{
    fn cost(&self, y: &DMatrix<T>) -> T {
        self(y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PistoSettings<T> {
    /// `1` disables elite filtering.
    pub elite_fraction: T,
    pub smoothing: Smoothing<T>,
    pub variant: WeightVariant,
}

impl<T: Real> Default for PistoSettings<T> {
    fn default() -> Self {
        Self { elite_fraction: T::one(), smoothing: Smoothing::none(), variant: WeightVariant::Algorithm }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", bound = "T: Real")]
pub enum Method<T> {
    Pisto(PistoSettings<T>),
    Stomp,
    Cem { elite_fraction: T },
    Mppi { lambda: T },
}

impl<T: Real> Method<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Pisto(_) => "pisto",
            Method::Stomp => "stomp",
            Method::Cem { .. } => "cem",
            Method::Mppi { .. } => "mppi",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig<T> {
    pub samples: usize,
    pub schedule: ProximalSchedule<T>,
    pub method: Method<T>,
    pub seed: u64,
}

impl<T: Real> OptimizerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(invalid("sample count must be >= 1"));
        }
        self.schedule.validate()?;
        match &self.method {
            Method::Pisto(p) => {
                check_fraction(p.elite_fraction)?;
                p.smoothing.validate()?;
            }
            Method::Stomp => {}
            Method::Cem { elite_fraction } => check_fraction(*elite_fraction)?,
            Method::Mppi { lambda } => {
                if !(*lambda > T::zero()) {
                    return Err(invalid("mppi temperature must be > 0"));
                }
            }
        }
        Ok(())
    }
}

fn check_fraction<T: Real>(f: T) -> Result<()> {
    if f > T::zero() && f <= T::one() {
        Ok(())
    } else {
        Err(invalid(format!("elite fraction must lie in (0, 1], got {}", f.as_f64())))
    }
}

/// Cost callable, prior and starting mean.
pub struct Problem<'a, T: Real, C> {
    pub cost: C,
    pub prior: &'a SmoothnessPrior<T>,
    pub initial: DMatrix<T>,
}

/// One row of the optimization history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord<T> {
    pub iteration: usize,
    /// Best objective `S(Y) + ½‖AY + B‖²` over every mean seen so far.
    pub best_cost: T,
    /// Average sample cost `S` of this iteration's batch.
    pub mean_cost: T,
    pub sigma_k: T,
    /// `η_k` (PISTO only; other methods report the schedule value unused).
    pub eta_k: T,
    /// Frobenius norm of `Y_{k+1} − Y_k`.
    pub update_norm: T,
    pub uniform_fallback: bool,
    pub diverged_samples: usize,
}

#[derive(Debug, Clone)]
pub struct OptimizerState<T: Real> {
    pub mean: DMatrix<T>,
    pub smoothing: SmoothingState<T>,
    pub k: usize,
    pub best: DMatrix<T>,
    pub best_cost: T,
    pub history: Vec<IterationRecord<T>>,
}

/// Everything produced by one iteration, for inspection.
#[derive(Debug, Clone)]
pub struct StepReport<T: Real> {
    pub batch: PerturbationBatch<T>,
    pub costs: Vec<T>,
    /// Importance weights (PISTO, STOMP and MPPI).
    pub weights: Option<WeightVector<T>>,
    /// Raw update `Ŷ_{k+1}` before smoothing.
    pub candidate: DMatrix<T>,
    pub record: IterationRecord<T>,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult<T: Real> {
    pub best: DMatrix<T>,
    pub best_cost: T,
    pub final_mean: DMatrix<T>,
    pub history: Vec<IterationRecord<T>>,
}

/// Replaces non-finite costs with `10×` the worst finite cost of the batch
/// (`worst + 10` when that is not positive). Returns how many were replaced.
pub fn substitute_divergent_costs<T: Real>(costs: &mut [T]) -> Result<usize> {
    let worst = costs
        .iter()
        .copied()
        .filter(|c| c.is_finite_value())
        .fold(None, |acc: Option<T>, c| Some(acc.map_or(c, |a| a.max(c))));
    let Some(worst) = worst else {
        return Err(Error::DegenerateWeights("every sample cost is non-finite".into()));
    };
    let penalty = if worst > T::zero() { worst * T::lit(10.0) } else { worst + T::lit(10.0) };
    let mut replaced = 0;
    for c in costs.iter_mut() {
        if !c.is_finite_value() {
            *c = penalty;
            replaced += 1;
        }
    }
    Ok(replaced)
}

pub struct Optimizer<'a, T: Real, C> {
    problem: Problem<'a, T, C>,
    config: OptimizerConfig<T>,
    state: OptimizerState<T>,
}

impl<'a, T: Real, C: CostFunction<T>> Optimizer<'a, T, C> {
    pub fn new(problem: Problem<'a, T, C>, config: OptimizerConfig<T>) -> Result<Self> {
        config.validate()?;
        let initial = problem.initial.clone();
        if initial.nrows() != problem.prior.n_free() || initial.ncols() == 0 {
            return Err(invalid(format!(
                "initial mean is {}×{}, prior expects {} rows",
                initial.nrows(),
                initial.ncols(),
                problem.prior.n_free()
            )));
        }
        if initial.iter().any(|v| !v.is_finite_value()) {
            return Err(invalid("initial mean must be finite"));
        }
        let best_cost = objective(&problem, &initial)?;
        let state = OptimizerState {
            smoothing: SmoothingState::new(initial.nrows(), initial.ncols()),
            best: initial.clone(),
            mean: initial,
            best_cost,
            k: 0,
            history: Vec::new(),
        };
        Ok(Self { problem, config, state })
    }

    pub fn state(&self) -> &OptimizerState<T> {
        &self.state
    }

    pub fn config(&self) -> &OptimizerConfig<T> {
        &self.config
    }

    pub fn is_done(&self) -> bool {
        self.state.k >= self.config.schedule.k_max
    }

    /// Runs one iteration regardless of the iteration budget.
    pub fn step(&mut self) -> Result<StepReport<T>> {
        let k = self.state.k;
        let sched = &self.config.schedule;
        let sigma_k = sched.sigma(k);
        let eta_k = sched.eta(k);
        let prior = self.problem.prior;
        let mean = &self.state.mean;

        let batch = sample_perturbations(
            prior,
            sigma_k,
            self.config.samples,
            mean.ncols(),
            SeedTag { seed: self.config.seed, iteration: k as u64 },
        )?;
        let samples: Vec<DMatrix<T>> = batch.eps.iter().map(|e| mean + e).collect();
        let mut costs: Vec<T> = samples.par_iter().map(|s| self.problem.cost.cost(s)).collect();
        let diverged_samples = substitute_divergent_costs(&mut costs)?;

        let mut uniform_fallback = false;
        let (weights, candidate, next) = match &self.config.method {
            Method::Pisto(settings) => {
                let g = gamma(eta_k)?;
                let elite = if settings.elite_fraction < T::one() {
                    Some(elite_filter(&costs, settings.elite_fraction)?)
                } else {
                    None
                };
                let weights = match pisto_weights(
                    &costs,
                    &batch,
                    prior,
                    mean,
                    g,
                    sched.tau,
                    settings.variant,
                    elite.as_deref(),
                ) {
                    Ok(w) => w,
                    Err(Error::DegenerateWeights(_)) => {
                        uniform_fallback = true;
                        uniform_over(costs.len(), elite.as_deref())
                    }
                    Err(e) => return Err(e),
                };
                let candidate = weighted_update(mean, &batch.eps, &weights)?;
                let delta = &candidate - mean;
                let next = momentum_step(mean, &mut self.state.smoothing, &delta, &settings.smoothing)?;
                (Some(weights), candidate, next)
            }
            Method::Stomp => {
                let weights = match stomp_weights(&costs, &batch, prior, mean) {
                    Ok(w) => w,
                    Err(Error::DegenerateWeights(_)) => {
                        uniform_fallback = true;
                        WeightVector::uniform(costs.len())
                    }
                    Err(e) => return Err(e),
                };
                let candidate = weighted_update(mean, &batch.eps, &weights)?;
                (Some(weights), candidate.clone(), candidate)
            }
            Method::Cem { elite_fraction } => {
                let candidate = cem_update(&samples, &costs, *elite_fraction)?;
                (None, candidate.clone(), candidate)
            }
            Method::Mppi { lambda } => {
                let (w, fallback) = crate::baselines::mppi_weights(&costs, *lambda)?;
                uniform_fallback = fallback;
                let candidate = mppi_update(&samples, &costs, *lambda, mean)?;
                (Some(w), candidate.clone(), candidate)
            }
        };

        if next.iter().any(|v| !v.is_finite_value()) {
            return Err(Error::Diverged { iteration: k, reason: "mean became non-finite".into() });
        }
        let update_norm = (&next - mean).norm();
        let j = objective(&self.problem, &next)?;
        if j < self.state.best_cost {
            self.state.best_cost = j;
            self.state.best = next.clone();
        }
        let mean_cost = costs.iter().fold(T::zero(), |a, &b| a + b) / count(costs.len());
        let record = IterationRecord {
            iteration: k,
            best_cost: self.state.best_cost,
            mean_cost,
            sigma_k,
            eta_k,
            update_norm,
            uniform_fallback,
            diverged_samples,
        };
        self.state.mean = next;
        self.state.k += 1;
        self.state.history.push(record);
        Ok(StepReport { batch, costs, weights, candidate, record })
    }

    /// Iterates until the budget is spent.
    pub fn run(mut self) -> Result<OptimizeResult<T>> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.into_result())
    }

    pub fn into_result(self) -> OptimizeResult<T> {
        OptimizeResult {
            best: self.state.best,
            best_cost: self.state.best_cost,
            final_mean: self.state.mean,
            history: self.state.history,
        }
    }
}

fn uniform_over<T: Real>(m: usize, support: Option<&[usize]>) -> WeightVector<T> {
    match support {
        None => WeightVector::uniform(m),
        Some(idx) => {
            let mut masses = vec![T::zero(); m];
            for &i in idx {
                masses[i] = T::one();
            }
            WeightVector::from_masses(&masses).unwrap_or_else(|_| WeightVector::uniform(m))
        }
    }
}

/// `S(Y) + control_energy(Y)`; non-finite costs map to `+∞`.
fn objective<T: Real, C: CostFunction<T>>(problem: &Problem<'_, T, C>, y: &DMatrix<T>) -> Result<T> {
    let j = problem.cost.cost(y) + problem.prior.control_energy(y)?;
    Ok(if j.is_finite_value() { j } else { T::lit(f64::INFINITY) })
}

/// Runs the configured method to completion.
pub fn optimize<T: Real, C: CostFunction<T>>(
    problem: Problem<'_, T, C>,
    config: OptimizerConfig<T>,
) -> Result<OptimizeResult<T>> {
    Optimizer::new(problem, config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{build_acceleration_operator, build_prior, OperatorMode};

    fn control_prior(n: usize, dt: f64) -> SmoothnessPrior<f64> {
        build_prior(build_acceleration_operator(n, dt, OperatorMode::Control).unwrap(), 0.0).unwrap()
    }

    fn pisto(k_max: usize) -> OptimizerConfig<f64> {
        OptimizerConfig {
            samples: 32,
            schedule: ProximalSchedule::constant(1.0, 1.0, k_max),
            method: Method::Pisto(PistoSettings::default()),
            seed: 9,
        }
    }

    #[test]
    fn zero_iterations_return_initial() {
        let prior = control_prior(5, 1.0);
        let init = DMatrix::from_element(5, 2, 0.3);
        let res = optimize(
            Problem { cost: |_: &DMatrix<f64>| 0.0, prior: &prior, initial: init.clone() },
            pisto(0),
        )
        .unwrap();
        assert_eq!(res.best, init);
        assert_eq!(res.final_mean, init);
        assert!(res.history.is_empty());
    }

    #[test]
    fn divergent_costs_become_penalties() {
        let mut c = vec![1.0, f64::NAN, 3.0, f64::INFINITY];
        assert_eq!(substitute_divergent_costs(&mut c).unwrap(), 2);
        assert_eq!(c, vec![1.0, 30.0, 3.0, 30.0]);
        let mut c = vec![-4.0, f64::NAN];
        substitute_divergent_costs(&mut c).unwrap();
        assert_eq!(c[1], 6.0);
        assert!(substitute_divergent_costs(&mut [f64::NAN]).is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        let prior = control_prior(4, 1.0);
        let p = || Problem { cost: |_: &DMatrix<f64>| 0.0, prior: &prior, initial: DMatrix::zeros(4, 1) };
        assert!(Optimizer::new(p(), OptimizerConfig { samples: 0, ..pisto(3) }).is_err());
        let cem = OptimizerConfig { method: Method::Cem { elite_fraction: 0.0 }, ..pisto(3) };
        assert!(Optimizer::new(p(), cem).is_err());
        let bad_init = Problem { cost: |_: &DMatrix<f64>| 0.0, prior: &prior, initial: DMatrix::zeros(3, 1) };
        assert!(Optimizer::new(bad_init, pisto(3)).is_err());
    }

    #[test]
    fn best_cost_never_increases_and_is_reproducible() {
        let prior = control_prior(6, 1.0);
        let target = DMatrix::from_fn(6, 1, |i, _| (i as f64).sin());
        let cost = |y: &DMatrix<f64>| 10.0 * (y - &target).norm_squared();
        for method in [
            Method::Pisto(PistoSettings {
                elite_fraction: 0.5,
                smoothing: Smoothing::Momentum { beta: 0.5, lambda: 0.8 },
                variant: WeightVariant::Algorithm,
            }),
            Method::Stomp,
            Method::Cem { elite_fraction: 0.25 },
            Method::Mppi { lambda: 1.0 },
        ] {
            let cfg = OptimizerConfig { samples: 24, schedule: ProximalSchedule::constant(2.0, 0.05, 20), method, seed: 3 };
            let run = || {
                optimize(Problem { cost, prior: &prior, initial: DMatrix::zeros(6, 1) }, cfg.clone()).unwrap()
            };
            let a = run();
            let b = run();
            assert_eq!(a.final_mean, b.final_mean, "{}", method.name());
            assert_eq!(a.history, b.history);
            assert_eq!(a.history.len(), 20);
            for w in a.history.windows(2) {
                assert!(w[1].best_cost <= w[0].best_cost);
            }
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        // With dt = 8 the prior is weak, so the minimizer of S + ½YᵀRY,
        // (I + R)⁻¹·Y*, lies within 0.02 of Y*.
        let prior = control_prior(4, 8.0);
        let target = DMatrix::from_column_slice(4, 1, &[1.0, -0.5, 0.25, 2.0]);
        let shrunk = (DMatrix::identity(4, 4) + prior.r()).lu().solve(&target).unwrap();
        assert!((&shrunk - &target).amax() < 0.02);

        let cost = |y: &DMatrix<f64>| 0.5 * (y - &target).norm_squared();
        let cfg = OptimizerConfig {
            samples: 500,
            schedule: ProximalSchedule {
                eta_init: 1.0,
                eta_final: 50.0,
                tau: 0.05,
                sigma_init: 0.001,
                sigma_final: 0.00001,
                k_max: 100,
            },
            method: Method::Pisto(PistoSettings::default()),
            seed: 1,
        };
        let res = optimize(Problem { cost, prior: &prior, initial: DMatrix::zeros(4, 1) }, cfg).unwrap();
        let err = (&res.final_mean - &target).amax();
        assert!(err < 0.1, "final mean off by {err}: {}", res.final_mean);
    }
}
