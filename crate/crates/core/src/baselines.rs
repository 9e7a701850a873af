//! Cross-entropy and path-integral mean updates.
//!
//! Both are mean-only: they reuse the same `σ_k·R⁻¹` sampling covariance as
//! the proximal optimizer so only the update rule differs.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::scalar::{count, Real};
use crate::weights::{elite_filter, normalize_log_weights, WeightVector};

/// Unweighted mean of the `⌈fraction·M⌉` lowest-cost samples.
pub fn cem_update<T: Real>(samples: &[DMatrix<T>], costs: &[T], elite_fraction: T) -> Result<DMatrix<T>> {
    if samples.is_empty() || samples.len() != costs.len() {
        return Err(invalid("cem needs one cost per sample and at least one sample"));
    }
    let elite = elite_filter(costs, elite_fraction)?;
    let (r, c) = samples[0].shape();
    let mut mean = DMatrix::zeros(r, c);
    for &i in &elite {
        mean += &samples[i];
    }
    Ok(mean / count::<T>(elite.len()))
}

/// `w̄ ∝ exp(−(S_m − min S)/λ)`; uniform when the exponents are unusable.
pub fn mppi_weights<T: Real>(costs: &[T], lambda: T) -> Result<(WeightVector<T>, bool)> {
    if !(lambda > T::zero()) {
        return Err(invalid(format!("mppi temperature must be > 0, got {}", lambda.as_f64())));
    }
    let min = costs
        .iter()
        .copied()
        .filter(|c| c.is_finite_value())
        .fold(T::lit(f64::INFINITY), |a, b| a.min(b));
    let log_w: Vec<T> = costs.iter().map(|&c| -(c - min) / lambda).collect();
    match normalize_log_weights(&log_w, None) {
        Ok(w) => Ok((w, false)),
        Err(crate::Error::DegenerateWeights(_)) => Ok((WeightVector::uniform(costs.len()), true)),
        Err(e) => Err(e),
    }
}

/// Exponentiated-cost average of the samples. `mean` only fixes the output
/// shape for the empty-sample check.
pub fn mppi_update<T: Real>(
    samples: &[DMatrix<T>],
    costs: &[T],
    lambda: T,
    mean: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    if samples.is_empty() || samples.len() != costs.len() {
        return Err(invalid("mppi needs one cost per sample and at least one sample"));
    }
    if samples.iter().any(|s| s.shape() != mean.shape()) {
        return Err(invalid("sample shape differs from the mean"));
    }
    let (w, _) = mppi_weights(costs, lambda)?;
    let mut next = DMatrix::zeros(mean.nrows(), mean.ncols());
    for (s, &wm) in samples.iter().zip(w.as_slice()) {
        next.zip_apply(s, |a, b| *a += wm * b);
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn cem_full_fraction_is_sample_average() {
        let y = col(&[1.0, 2.0]);
        let e = col(&[0.3, -0.7]);
        let samples = vec![&y + &e, &y - &e];
        let m = cem_update(&samples, &[4.0, 1.0], 1.0).unwrap();
        assert!((m - y).amax() < 1e-15);
    }

    #[test]
    fn cem_single_elite() {
        let samples = vec![col(&[1.0]), col(&[2.0]), col(&[3.0])];
        assert_eq!(cem_update(&samples, &[3.0, 0.5, 1.0], 0.1).unwrap(), col(&[2.0]));
    }

    #[test]
    fn cem_sort_and_average_fixture() {
        let samples = vec![col(&[1.0, 0.0]), col(&[0.0, 4.0]), col(&[-2.0, 2.0]), col(&[6.0, 6.0])];
        let costs = [2.0, 0.1, 3.0, 0.2];
        // two lowest costs: samples 1 and 3
        assert_eq!(cem_update(&samples, &costs, 0.5).unwrap(), col(&[3.0, 5.0]));
    }

    #[test]
    fn mppi_equal_costs_average() {
        let samples = vec![col(&[1.0]), col(&[2.0]), col(&[6.0])];
        let m = mppi_update(&samples, &[1.0; 3], 0.7, &col(&[0.0])).unwrap();
        assert!((m[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn mppi_cold_limit_is_argmin() {
        let samples = vec![col(&[1.0]), col(&[2.0]), col(&[6.0])];
        let m = mppi_update(&samples, &[1.0, 0.99, 1.5], 1e-8, &col(&[0.0])).unwrap();
        assert_eq!(m, col(&[2.0]));
    }

    #[test]
    fn mppi_two_term_softmax() {
        let lambda = 0.4;
        let (w, fallback) = mppi_weights(&[0.0, lambda * 3f64.ln()], lambda).unwrap();
        assert!(!fallback);
        assert!((w.as_slice()[0] - 0.75).abs() < 1e-15);
        assert!((w.as_slice()[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn mppi_falls_back_to_uniform() {
        let (w, fallback) = mppi_weights(&[f64::NAN, f64::INFINITY], 1.0).unwrap();
        assert!(fallback);
        assert_eq!(w.as_slice(), &[0.5, 0.5]);
        assert!(mppi_weights(&[1.0], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn affine_equivariance(
            vals in proptest::collection::vec(-5.0..5.0f64, 12),
            costs in proptest::collection::vec(0.0..10.0f64, 6),
            shift in -3.0..3.0f64,
        ) {
            let samples: Vec<_> = vals.chunks(2).map(col).collect();
            let moved: Vec<_> = samples.iter().map(|s| s.add_scalar(shift)).collect();
            let y = col(&[0.0, 0.0]);
            let a = cem_update(&samples, &costs, 0.5).unwrap();
            let b = cem_update(&moved, &costs, 0.5).unwrap();
            prop_assert!((b - a.add_scalar(shift)).amax() < 1e-12);
            let a = mppi_update(&samples, &costs, 0.8, &y).unwrap();
            let b = mppi_update(&moved, &costs, 0.8, &y.add_scalar(shift)).unwrap();
            prop_assert!((b - a.add_scalar(shift)).amax() < 1e-12);
        }

        #[test]
        fn mppi_simplex_and_shift(costs in proptest::collection::vec(-20.0..20.0f64, 1..30), c in -50.0..50.0f64) {
            let (a, _) = mppi_weights(&costs, 0.5).unwrap();
            let shifted: Vec<f64> = costs.iter().map(|x| x + c).collect();
            let (b, _) = mppi_weights(&shifted, 0.5).unwrap();
            prop_assert!((a.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!(*x >= 0.0);
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn cem_depends_only_on_elites(
            vals in proptest::collection::vec(-5.0..5.0f64, 6),
            junk in -100.0..100.0f64,
        ) {
            let samples: Vec<_> = vals.iter().map(|&v| col(&[v])).collect();
            let costs = [0.0, 5.0, 1.0, 6.0, 2.0, 7.0];
            let mut other = samples.clone();
            other[1] = col(&[junk]);
            other[3] = col(&[-junk]);
            prop_assert_eq!(cem_update(&samples, &costs, 0.5).unwrap(), cem_update(&other, &costs, 0.5).unwrap());
        }
    }
}
