use pisto::nalgebra::DMatrix;
use pisto::{
    build_acceleration_operator, build_prior, optimize, rollout, sample_perturbations, Bounds, Config32, Config64,
    Dynamics, Endpoints, Method, Model64, Obstacle, OperatorMode, PistoSettings, Prior32, Prior64, Problem, Scene64,
    Schedule32, Schedule64, SeedTag, Smoothing, WeightVariant,
};
use proptest::prelude::*;

fn control_prior(n: usize, dt: f64) -> Prior64 {
    build_prior(build_acceleration_operator(n, dt, OperatorMode::Control).unwrap(), 0.0).unwrap()
}

#[test]
fn perturbations_match_prior_moments() {
    let prior = control_prior(6, 1.0);
    let sigma = 0.3;
    let m = 10_000;
    let batch = sample_perturbations(&prior, sigma, m, 1, SeedTag { seed: 5, iteration: 0 }).unwrap();
    let cov = prior.covariance() * sigma;
    let mut mean = DMatrix::<f64>::zeros(6, 1);
    for e in &batch.eps {
        mean += e;
    }
    mean /= m as f64;
    for i in 0..6 {
        let sd = cov[(i, i)].sqrt();
        assert!(mean[i].abs() < 4.0 * sd / (m as f64).sqrt(), "mean[{i}] = {}", mean[i]);
    }
    let mut emp = DMatrix::<f64>::zeros(6, 6);
    for e in &batch.eps {
        emp += e * e.transpose();
    }
    emp /= m as f64;
    let rel = (&emp - &cov).norm() / cov.norm();
    assert!(rel < 0.1, "relative covariance error {rel}");
}

#[test]
fn zero_cost_mean_shrinks_by_one_minus_gamma_sigma() {
    // Small dt keeps R⁻¹, and with it the sampling noise, small.
    let prior = control_prior(5, 0.3);
    let y0 = DMatrix::from_element(5, 1, 1.0);
    let cfg = Config64 {
        samples: 2000,
        schedule: Schedule64::constant(1.0, 0.05, 20),
        method: Method::Pisto(PistoSettings {
            elite_fraction: 1.0,
            smoothing: Smoothing::none(),
            variant: WeightVariant::Scaled,
        }),
        seed: 3,
    };
    let res = optimize(Problem { cost: |_: &DMatrix<f64>| 0.0, prior: &prior, initial: y0.clone() }, cfg).unwrap();
    // η = 1 gives γ = 1/2; each step scales the mean by 1 − γσ.
    let expected = (1.0 - 0.5 * 0.05f64).powi(20);
    for v in res.final_mean.iter() {
        assert!((v - expected).abs() < 0.02, "final mean {}", res.final_mean);
    }
    assert_eq!(res.history.len(), 20);
}

#[test]
fn pisto_clears_a_blocking_obstacle() {
    let scene = Scene64 {
        bounds: Bounds { min: [0.0, 0.0], max: [10.0, 10.0] },
        start: [1.0, 5.0],
        goal: [9.0, 5.0],
        obstacles: vec![Obstacle::Circle { center: [5.0, 5.2], radius: 1.5 }],
        delta: 0.2,
        w_obs: 100.0,
        sigma_obs: 100.0,
    };
    let op = build_acceleration_operator(
        30,
        1.0,
        OperatorMode::Planning(Endpoints { start: scene.start.to_vec(), goal: scene.goal.to_vec() }),
    )
    .unwrap();
    let prior = build_prior(op, 0.0).unwrap();
    let cfg = Config64 {
        samples: 64,
        schedule: Schedule64 { eta_init: 1.0, eta_final: 100.0, tau: 1.0, sigma_init: 1e-3, sigma_final: 1e-5, k_max: 100 },
        method: Method::Pisto(PistoSettings {
            elite_fraction: 0.5,
            smoothing: Smoothing::Momentum { beta: 0.7, lambda: 1.0 },
            variant: WeightVariant::Algorithm,
        }),
        seed: 0,
    };
    let cost = |y: &DMatrix<f64>| scene.potential_sdf(y);
    let res = optimize(Problem { cost, prior: &prior, initial: prior.straight_line(2) }, cfg).unwrap();
    let m = scene.metrics(&prior.full_trajectory(&res.best)).unwrap();
    assert!(m.success, "clearance {}", m.clearance);
}

#[test]
fn single_precision_run_is_finite() {
    let prior: Prior32 = build_prior(build_acceleration_operator(8, 1.0f32, OperatorMode::Control).unwrap(), 0.0).unwrap();
    let cfg = Config32 {
        samples: 32,
        schedule: Schedule32 { eta_init: 1.0, eta_final: 10.0, tau: 1.0, sigma_init: 1e-2, sigma_final: 1e-4, k_max: 10 },
        method: Method::Stomp,
        seed: 1,
    };
    let target = 0.5f32;
    let cost = |y: &DMatrix<f32>| y.iter().map(|v| (v - target).powi(2)).sum::<f32>();
    let res = optimize(Problem { cost, prior: &prior, initial: DMatrix::zeros(8, 1) }, cfg).unwrap();
    assert!(res.best_cost.is_finite());
    assert!(res.best_cost <= 8.0 * target * target);
}

#[test]
fn rollouts_are_reproducible() {
    for name in pisto::BUILTIN_MODEL_NAMES {
        let model = Model64::by_name(name).unwrap();
        let u = DMatrix::from_fn(model.horizon(), model.control_dim(), |t, j| ((t + j) as f64 * 0.37).sin());
        let a = rollout(&model, &model.initial_state(), &u).unwrap();
        let b = rollout(&model, &model.initial_state(), &u).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.states.nrows(), model.horizon() + 1);
        assert!((a.per_step_cost.iter().sum::<f64>() - a.total).abs() < 1e-9 * a.total.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn perturbation_batches_are_seed_deterministic(seed in any::<u64>(), it in 0u64..1000, n in 2usize..10) {
        let prior = control_prior(n, 1.0);
        let a = sample_perturbations(&prior, 0.1, 8, 2, SeedTag { seed, iteration: it }).unwrap();
        let b = sample_perturbations(&prior, 0.1, 8, 2, SeedTag { seed, iteration: it }).unwrap();
        prop_assert_eq!(a.eps, b.eps);
    }

    #[test]
    fn control_energy_is_nonnegative(vals in proptest::collection::vec(-10.0..10.0f64, 6)) {
        let prior = control_prior(6, 0.5);
        let y = DMatrix::from_vec(6, 1, vals);
        prop_assert!(prior.control_energy(&y).unwrap() >= -1e-12);
    }
}
