//! Self-normalized importance weights and elite selection.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::prior::{PerturbationBatch, SmoothnessPrior};
use crate::scalar::{count, Real};

/// Non-negative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector<T> {
    w_bar: Vec<T>,
}

impl<T: Real> WeightVector<T> {
    pub fn uniform(m: usize) -> Self {
        let w = T::one() / count(m.max(1));
        Self { w_bar: vec![w; m] }
    }

    /// Weight one on `index`, zero elsewhere.
    pub fn vertex(m: usize, index: usize) -> Self {
        let mut w_bar = vec![T::zero(); m];
        w_bar[index] = T::one();
        Self { w_bar }
    }

    /// Normalizes arbitrary non-negative masses.
    pub fn from_masses(masses: &[T]) -> Result<Self> {
        if masses.iter().any(|&w| w < T::zero() || !w.is_finite_value()) {
            return Err(invalid("weights must be finite and non-negative"));
        }
        let total = masses.iter().fold(T::zero(), |a, &b| a + b);
        if !(total > T::zero()) {
            return Err(Error::DegenerateWeights("total mass is zero".into()));
        }
        Ok(Self { w_bar: masses.iter().map(|&w| w / total).collect() })
    }

    pub fn as_slice(&self) -> &[T] {
        &self.w_bar
    }

    pub fn len(&self) -> usize {
        self.w_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w_bar.is_empty()
    }

    /// Kish effective sample size `1 / Σ w̄²`.
    pub fn effective_sample_size(&self) -> T {
        T::one() / self.w_bar.iter().fold(T::zero(), |a, &w| a + w * w)
    }
}

/// How the proximal factor γ enters the weight exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightVariant {
    /// `−(γ/τ)·S − εᵀ(RY)`: γ scales only the cost.
    #[default]
    Algorithm,
    /// `−(γ/τ)·S − γ·εᵀ(RY)`: γ scales the regularizer too.
    Scaled,
}

/// `⟨v_m, g⟩` for every sample, with `g` the gradient of the control energy
/// at the current mean (`R·Y_k`, plus `Aᵀ·B` when endpoints are fixed).
pub fn regularization_terms<T: Real>(vectors: &[DMatrix<T>], grad: &DMatrix<T>) -> Vec<T> {
    vectors.iter().map(|v| v.dot(grad)).collect()
}

/// Softmax of `log_w` restricted to `support` (all indices when `None`),
/// computed with a max shift.
pub fn normalize_log_weights<T: Real>(log_w: &[T], support: Option<&[usize]>) -> Result<WeightVector<T>> {
    let m = log_w.len();
    if m == 0 {
        return Err(invalid("no samples to weight"));
    }
    let mut active = vec![support.is_none(); m];
    if let Some(idx) = support {
        for &i in idx {
            if i >= m {
                return Err(invalid(format!("support index {i} out of range {m}")));
            }
            active[i] = true;
        }
    }
    let mut shift = T::lit(f64::NEG_INFINITY);
    for (i, &lw) in log_w.iter().enumerate() {
        if active[i] && lw.is_finite_value() && lw > shift {
            shift = lw;
        }
    }
    if !shift.is_finite_value() {
        return Err(Error::DegenerateWeights("no finite log-weight in the support".into()));
    }
    let masses: Vec<T> = log_w
        .iter()
        .enumerate()
        .map(|(i, &lw)| if active[i] && lw.is_finite_value() { (lw - shift).exp() } else { T::zero() })
        .collect();
    let total = masses.iter().fold(T::zero(), |a, &b| a + b);
    if !(total > T::zero()) || !total.is_finite_value() {
        return Err(Error::DegenerateWeights(format!("weight total {}", total.as_f64())));
    }
    Ok(WeightVector { w_bar: masses.into_iter().map(|w| w / total).collect() })
}

/// Log-weights `−(γ/τ)·S_m − c·r_m` with `c = 1` or `γ` depending on the variant.
pub fn pisto_log_weights<T: Real>(
    costs: &[T],
    reg_terms: &[T],
    gamma: T,
    tau: T,
    variant: WeightVariant,
) -> Result<Vec<T>> {
    if costs.len() != reg_terms.len() {
        return Err(invalid("costs and regularization terms differ in length"));
    }
    if !(tau > T::zero()) {
        return Err(invalid(format!("tau must be > 0, got {}", tau.as_f64())));
    }
    let energy_scale = gamma / tau;
    let reg_scale = match variant {
        WeightVariant::Algorithm => T::one(),
        WeightVariant::Scaled => gamma,
    };
    Ok(costs.iter().zip(reg_terms).map(|(&s, &r)| -energy_scale * s - reg_scale * r).collect())
}

/// PISTO importance weights for a batch around `mean`, optionally restricted
/// to an elite subset.
#[allow(clippy::too_many_arguments)]
pub fn pisto_weights<T: Real>(
    costs: &[T],
    batch: &PerturbationBatch<T>,
    prior: &SmoothnessPrior<T>,
    mean: &DMatrix<T>,
    gamma: T,
    tau: T,
    variant: WeightVariant,
    support: Option<&[usize]>,
) -> Result<WeightVector<T>> {
    if costs.len() != batch.len() {
        return Err(invalid("one cost per perturbation required"));
    }
    let grad = prior.energy_gradient(mean)?;
    let reg = regularization_terms(&batch.eps, &grad);
    normalize_log_weights(&pisto_log_weights(costs, &reg, gamma, tau, variant)?, support)
}

/// Path-integral weights `∝ exp(−(S_m + ε_mᵀ R Y))`.
pub fn stomp_weights<T: Real>(
    costs: &[T],
    batch: &PerturbationBatch<T>,
    prior: &SmoothnessPrior<T>,
    mean: &DMatrix<T>,
) -> Result<WeightVector<T>> {
    if costs.len() != batch.len() {
        return Err(invalid("one cost per perturbation required"));
    }
    let grad = prior.energy_gradient(mean)?;
    let log_w: Vec<T> = costs
        .iter()
        .zip(&batch.eps)
        .map(|(&s, eps)| -(s + eps.dot(&grad)))
        .collect();
    normalize_log_weights(&log_w, None)
}

/// Indices of the `⌈fraction·M⌉` lowest costs, ties to the lower index,
/// returned in ascending index order.
pub fn elite_filter<T: Real>(costs: &[T], fraction: T) -> Result<Vec<usize>> {
    if !(fraction > T::zero() && fraction <= T::one()) {
        return Err(invalid(format!("elite fraction must lie in (0, 1], got {}", fraction.as_f64())));
    }
    let m = costs.len();
    let n_elite = ((fraction * count(m)).ceil().as_f64() as usize).clamp(1, m.max(1));
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        costs[a].partial_cmp(&costs[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b))
    });
    let mut elite: Vec<usize> = order.into_iter().take(n_elite.min(m)).collect();
    elite.sort_unstable();
    Ok(elite)
}
