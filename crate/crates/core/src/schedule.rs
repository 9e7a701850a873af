//! Proximal step size, temperature and covariance-scale schedules.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::{count, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ProximalSchedule<T> {
    pub eta_init: T,
    pub eta_final: T,
    pub tau: T,
    pub sigma_init: T,
    pub sigma_final: T,
    pub k_max: usize,
}

impl<T: Real> ProximalSchedule<T> {
    /// Constant `η` and `σ` over `k_max` iterations, `τ = 1`.
    pub fn constant(eta: T, sigma: T, k_max: usize) -> Self {
        Self { eta_init: eta, eta_final: eta, tau: T::one(), sigma_init: sigma, sigma_final: sigma, k_max }
    }

    /// All scales must be positive. `k_max = 0` is accepted and means "no iterations".
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta_init", self.eta_init),
            ("eta_final", self.eta_final),
            ("tau", self.tau),
            ("sigma_init", self.sigma_init),
            ("sigma_final", self.sigma_final),
        ] {
            if !(v > T::zero()) || !v.is_finite_value() {
                return Err(invalid(format!("{name} must be positive and finite, got {}", v.as_f64())));
            }
        }
        Ok(())
    }

    fn progress(&self, k: usize) -> T {
        if self.k_max == 0 {
            T::zero()
        } else {
            count::<T>(k.min(self.k_max)) / count(self.k_max)
        }
    }

    /// Cosine annealing `σ_f + ½(σ_i − σ_f)(1 + cos(πk/K))`.
    pub fn sigma(&self, k: usize) -> T {
        sigma_schedule(k, self)
    }

    /// Geometric interpolation `η_i (η_f/η_i)^{k/K}`.
    pub fn eta(&self, k: usize) -> T {
        eta_schedule(k, self)
    }
}

pub fn sigma_schedule<T: Real>(k: usize, sched: &ProximalSchedule<T>) -> T {
    let s = sched.progress(k);
    if s == T::one() {
        return sched.sigma_final;
    }
    let half = T::lit(0.5);
    sched.sigma_final + half * (sched.sigma_init - sched.sigma_final) * (T::one() + (T::pi() * s).cos())
}

pub fn eta_schedule<T: Real>(k: usize, sched: &ProximalSchedule<T>) -> T {
    let s = sched.progress(k);
    if s == T::one() {
        return sched.eta_final;
    }
    sched.eta_init * (sched.eta_final / sched.eta_init).powf(s)
}

/// `γ = η / (η + 1)`.
pub fn gamma<T: Real>(eta: T) -> Result<T> {
    if !(eta > T::zero()) {
        return Err(invalid(format!("eta must be > 0, got {}", eta.as_f64())));
    }
    if !eta.is_finite_value() {
        return Ok(T::one());
    }
    Ok(eta / (eta + T::one()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched() -> ProximalSchedule<f64> {
        ProximalSchedule { eta_init: 0.5, eta_final: 8.0, tau: 1.0, sigma_init: 3.0, sigma_final: 1.0, k_max: 10 }
    }

    #[test]
    fn gamma_values() {
        assert_eq!(gamma(1.0).unwrap(), 0.5);
        assert_eq!(gamma(0.25).unwrap(), 0.2);
        assert!((gamma(1e9f64).unwrap() - 1.0).abs() < 1e-9);
        assert!(gamma(0.0).is_err());
        assert!(gamma(-1.0).is_err());
    }

    #[test]
    fn gamma_is_increasing() {
        let mut prev = 0.0;
        for i in 1..200 {
            let g = gamma(i as f64 * 0.37).unwrap();
            assert!(g > prev);
            prev = g;
        }
    }

    #[test]
    fn sigma_endpoints_and_midpoint() {
        let s = sched();
        assert_eq!(s.sigma(0), 3.0);
        assert_eq!(s.sigma(10), 1.0);
        assert!((s.sigma(5) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn eta_endpoints_and_midpoint() {
        let s = sched();
        assert_eq!(s.eta(0), 0.5);
        assert_eq!(s.eta(10), 8.0);
        assert!((s.eta(5) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(sched().validate().is_ok());
        assert!(ProximalSchedule { tau: 0.0, ..sched() }.validate().is_err());
        assert!(ProximalSchedule { sigma_final: -1.0, ..sched() }.validate().is_err());
        let zero = ProximalSchedule { k_max: 0, ..sched() };
        assert!(zero.validate().is_ok());
        assert_eq!(zero.sigma(0), 3.0);
    }
}
