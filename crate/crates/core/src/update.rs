//! Mean updates: weighted perturbation average and its smoothing.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Real;
use crate::weights::WeightVector;

/// `Ŷ = Y + Σ w̄_m ε_m`.
pub fn weighted_update<T: Real>(
    mean: &DMatrix<T>,
    eps: &[DMatrix<T>],
    weights: &WeightVector<T>,
) -> Result<DMatrix<T>> {
    if eps.len() != weights.len() {
        return Err(invalid("one weight per perturbation required"));
    }
    let mut next = mean.clone();
    for (e, &w) in eps.iter().zip(weights.as_slice()) {
        if w != T::zero() {
            next.zip_apply(e, |a, b| *a += w * b);
        }
    }
    Ok(next)
}

/// Post-processing of the raw update direction `Δ = Ŷ − Y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Real")]
pub enum Smoothing<T> {
    /// `v ← βv + (1−β)Δ`, `Y ← Y + λv`.
    Momentum { beta: T, lambda: T },
    /// Bias-corrected Adam on the pseudo-gradient `−Δ`.
    Adam { lr: T, beta1: T, beta2: T, epsilon: T },
}

impl<T: Real> Smoothing<T> {
    /// Plain update: `β = 0`, `λ = 1`.
    pub fn none() -> Self {
        Smoothing::Momentum { beta: T::zero(), lambda: T::one() }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Smoothing::Momentum { beta, lambda } => {
                if !(beta >= T::zero() && beta < T::one()) {
                    return Err(invalid("momentum beta must lie in [0, 1)"));
                }
                if !(lambda > T::zero() && lambda <= T::one()) {
                    return Err(invalid("momentum step lambda must lie in (0, 1]"));
                }
            }
            Smoothing::Adam { lr, beta1, beta2, epsilon } => {
                if !(lr > T::zero()) || !(epsilon > T::zero()) {
                    return Err(invalid("adam lr and epsilon must be positive"));
                }
                if !(beta1 >= T::zero() && beta1 < T::one() && beta2 >= T::zero() && beta2 < T::one()) {
                    return Err(invalid("adam betas must lie in [0, 1)"));
                }
            }
        }
        Ok(())
    }
}

/// Momentum buffer and optional Adam moments carried across iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingState<T: Real> {
    pub velocity: DMatrix<T>,
    pub second_moment: DMatrix<T>,
    pub steps: i32,
}

impl<T: Real> SmoothingState<T> {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { velocity: DMatrix::zeros(rows, cols), second_moment: DMatrix::zeros(rows, cols), steps: 0 }
    }
}

/// Applies one smoothed step and returns the new mean.
pub fn momentum_step<T: Real>(
    mean: &DMatrix<T>,
    state: &mut SmoothingState<T>,
    delta: &DMatrix<T>,
    smoothing: &Smoothing<T>,
) -> Result<DMatrix<T>> {
    if delta.shape() != mean.shape() || state.velocity.shape() != mean.shape() {
        return Err(invalid("update direction shape differs from the mean"));
    }
    state.steps += 1;
    match *smoothing {
        Smoothing::Momentum { beta, lambda } => {
            state.velocity = &state.velocity * beta + delta * (T::one() - beta);
            Ok(mean + &state.velocity * lambda)
        }
        Smoothing::Adam { lr, beta1, beta2, epsilon } => {
            let grad = -delta;
            state.velocity = &state.velocity * beta1 + &grad * (T::one() - beta1);
            state.second_moment =
                &state.second_moment * beta2 + grad.component_mul(&grad) * (T::one() - beta2);
            let c1 = T::one() - beta1.powi(state.steps);
            let c2 = T::one() - beta2.powi(state.steps);
            let step = DMatrix::from_fn(mean.nrows(), mean.ncols(), |i, j| {
                let m_hat = state.velocity[(i, j)] / c1;
                let v_hat = state.second_moment[(i, j)] / c2;
                lr * m_hat / (v_hat.sqrt() + epsilon)
            });
            Ok(mean - step)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_pairs_cancel() {
        let y = DMatrix::from_element(3, 2, 0.7);
        let e = DMatrix::from_fn(3, 2, |i, j| (i + j) as f64 + 0.5);
        let w = WeightVector::uniform(2);
        let next = weighted_update(&y, &[e.clone(), -e], &w).unwrap();
        assert!((next - y).amax() < 1e-15);
    }

    #[test]
    fn vertex_weight_picks_sample() {
        let y = DMatrix::from_element(2, 1, 1.0);
        let eps = vec![DMatrix::from_element(2, 1, 0.5), DMatrix::from_element(2, 1, -3.0)];
        let next = weighted_update(&y, &eps, &WeightVector::vertex(2, 1)).unwrap();
        assert_eq!(next, &y + &eps[1]);
    }

    #[test]
    fn matches_convex_combination_of_samples() {
        let y = DMatrix::from_column_slice(3, 1, &[0.1, -0.4, 2.0]);
        let eps: Vec<_> = (0..4).map(|m| DMatrix::from_fn(3, 1, |i, _| ((m * 3 + i) as f64).cos())).collect();
        let w = WeightVector::from_masses(&[0.1, 0.5, 0.15, 0.25]).unwrap();
        let next = weighted_update(&y, &eps, &w).unwrap();
        let mut direct = DMatrix::zeros(3, 1);
        for (e, &wm) in eps.iter().zip(w.as_slice()) {
            direct += (&y + e) * wm;
        }
        assert!((next - direct).amax() < 1e-14);
    }

    #[test]
    fn plain_momentum_is_identity_step() {
        let y = DMatrix::from_element(2, 2, 1.0);
        let d = DMatrix::from_element(2, 2, 0.25);
        let mut s = SmoothingState::new(2, 2);
        assert_eq!(momentum_step(&y, &mut s, &d, &Smoothing::none()).unwrap(), &y + &d);
        let mut s = SmoothingState::new(2, 2);
        let zero = DMatrix::zeros(2, 2);
        assert_eq!(momentum_step(&y, &mut s, &zero, &Smoothing::Momentum { beta: 0.9, lambda: 0.5 }).unwrap(), y);
    }

    #[test]
    fn ema_unrolls() {
        // v1 = 0.5 d, v2 = 0.5·0.5 d + 0.5 d = 0.75 d
        let d = DMatrix::from_element(1, 1, 2.0);
        let smoothing = Smoothing::Momentum { beta: 0.5, lambda: 1.0 };
        let mut s = SmoothingState::new(1, 1);
        let y0 = DMatrix::zeros(1, 1);
        let y1 = momentum_step(&y0, &mut s, &d, &smoothing).unwrap();
        assert_eq!(y1[(0, 0)], 1.0);
        let y2 = momentum_step(&y1, &mut s, &d, &smoothing).unwrap();
        assert_eq!(y2[(0, 0)] - y1[(0, 0)], 1.5);
    }

    #[test]
    fn adam_first_step_moves_by_lr_along_delta() {
        let smoothing = Smoothing::Adam { lr: 0.1, beta1: 0.9, beta2: 0.999, epsilon: 1e-12 };
        let mut s = SmoothingState::new(2, 1);
        let d = DMatrix::from_column_slice(2, 1, &[3.0f64, -0.01]);
        let y = momentum_step(&DMatrix::zeros(2, 1), &mut s, &d, &smoothing).unwrap();
        assert!((y[(0, 0)] - 0.1).abs() < 1e-9);
        assert!((y[(1, 0)] + 0.1).abs() < 1e-6);
    }

    #[test]
    fn validation() {
        assert!(Smoothing::Momentum { beta: 1.0, lambda: 1.0 }.validate().is_err());
        assert!(Smoothing::Momentum { beta: 0.5, lambda: 0.0 }.validate().is_err());
        assert!(Smoothing::<f64>::none().validate().is_ok());
        assert!(Smoothing::Adam { lr: 0.0, beta1: 0.9, beta2: 0.99, epsilon: 1e-8 }.validate().is_err());
    }
}
