//! Derivative-free trajectory optimization by proximal importance-weighted
//! variational inference (PISTO), with STOMP, CEM and MPPI update rules.
//!
//! The decision variable is a trajectory mean stored as an `n_free × n_dims`
//! matrix: free waypoints of a planar path in planning mode, or a control
//! sequence in control mode. Samples are drawn from a finite-difference
//! smoothness prior `N(0, σ_k R⁻¹)` and recombined with self-normalized
//! importance weights.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the `*64` and
//! `*32` aliases below name the common instantiations.

pub mod baselines;
pub mod cost;
pub mod dynamics;
mod error;
pub mod inference;
pub mod optimizer;
pub mod prior;
mod scalar;
pub mod schedule;
pub mod update;
pub mod weights;

pub use baselines::{cem_update, mppi_update, mppi_weights};
pub use cost::{hinge, Bounds, CostKind, Obstacle, PathMetrics, PointRobot, Scene, WorkspaceMap};
pub use dynamics::{
    builtin_models, clamp_controls, rollout, BuiltinModel, CartPole, Dynamics, Pendulum, PointMass2d,
    RolloutResult, BUILTIN_MODEL_NAMES,
};
pub use error::{Error, Result};
pub use inference::{gaussian_kl, gaussian_log_density, reverse_kl_gradient, surrogate_logdensity, Surrogate, SurrogateForm};
pub use optimizer::{
    optimize, substitute_divergent_costs, CostFunction, IterationRecord, Method, OptimizeResult, Optimizer,
    OptimizerConfig, OptimizerState, PistoSettings, Problem, StepReport,
};
pub use prior::{
    build_acceleration_operator, build_prior, perturbation_from_normals, recommended_ridge, sample_perturbations,
    sample_rng, AccelerationOperator, Endpoints, OperatorMode, PerturbationBatch, SeedTag, SmoothnessPrior,
};
pub use scalar::Real;
pub use schedule::{eta_schedule, gamma, sigma_schedule, ProximalSchedule};
pub use update::{momentum_step, weighted_update, Smoothing, SmoothingState};
pub use weights::{
    elite_filter, normalize_log_weights, pisto_log_weights, pisto_weights, regularization_terms, stomp_weights,
    WeightVariant, WeightVector,
};

pub type Prior64 = SmoothnessPrior<f64>;
pub type Prior32 = SmoothnessPrior<f32>;
pub type Scene64 = Scene<f64>;
pub type Scene32 = Scene<f32>;
pub type Schedule64 = ProximalSchedule<f64>;
pub type Schedule32 = ProximalSchedule<f32>;
pub type Config64 = OptimizerConfig<f64>;
pub type Config32 = OptimizerConfig<f32>;
pub type Method64 = Method<f64>;
pub type Model64 = BuiltinModel<f64>;
pub type Model32 = BuiltinModel<f32>;
pub type Trajectory64 = nalgebra::DMatrix<f64>;
pub type Trajectory32 = nalgebra::DMatrix<f32>;

pub use nalgebra;
