//! Gaussian identities behind the proximal update: closed-form KL, the
//! surrogate target in its two algebraic forms, and the reverse-KL gradient.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{invalid, Error, Result};
use crate::scalar::{count, Real};
use crate::schedule::gamma;

fn cholesky<T: Real>(m: &DMatrix<T>, what: &str) -> Result<Cholesky<T, Dyn>> {
    if !m.is_square() {
        return Err(invalid(format!("{what} must be square")));
    }
    Cholesky::new(m.clone()).ok_or_else(|| invalid(format!("{what} is not positive definite")))
}

fn log_det<T: Real>(c: &Cholesky<T, Dyn>) -> T {
    let l = c.l_dirty();
    (0..l.nrows()).fold(T::zero(), |acc, i| acc + l[(i, i)].ln()) * T::lit(2.0)
}

/// `D_KL(N(μ₀, Σ₀) ‖ N(μ₁, Σ₁))`.
pub fn gaussian_kl<T: Real>(
    mu0: &DVector<T>,
    cov0: &DMatrix<T>,
    mu1: &DVector<T>,
    cov1: &DMatrix<T>,
) -> Result<T> {
    let k = mu0.len();
    if mu1.len() != k || cov0.nrows() != k || cov1.nrows() != k {
        return Err(invalid("dimension mismatch"));
    }
    let c0 = cholesky(cov0, "cov0")?;
    let c1 = cholesky(cov1, "cov1")?;
    let trace = c1.solve(cov0).trace();
    let diff = mu1 - mu0;
    let maha = diff.dot(&c1.solve(&diff));
    let half = T::lit(0.5);
    Ok(half * (trace + maha - count(k) + log_det(&c1) - log_det(&c0)))
}

/// Normalized log-density of `N(μ, Σ)` at `x`.
pub fn gaussian_log_density<T: Real>(x: &DVector<T>, mu: &DVector<T>, cov: &DMatrix<T>) -> Result<T> {
    let c = cholesky(cov, "covariance")?;
    let d = x - mu;
    let half = T::lit(0.5);
    let k: T = count(x.len());
    Ok(-half * (d.dot(&c.solve(&d)) + log_det(&c) + k * T::two_pi().ln()))
}

/// `∇_Y D_KL(p ‖ N(Y, Σ)) = E_p[−Σ⁻¹(Ỹ − Y)] = −Σ⁻¹(E_p[Ỹ] − Y)`.
pub fn reverse_kl_gradient<T: Real>(
    target_mean: &DVector<T>,
    y: &DVector<T>,
    sigma: &DMatrix<T>,
) -> Result<DVector<T>> {
    let c = cholesky(sigma, "sigma")?;
    Ok(-c.solve(&(target_mean - y)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateForm {
    /// `γ·log[e^{−S} N(0, R⁻¹)] + (1−γ)·log N(Y_k, Σ)`.
    Interpolation,
    /// `−γS − ½(Ỹ − μ_k)ᵀP(Ỹ − μ_k)`.
    Tilted,
}

/// Proximal surrogate target around `Y_k`, both forms unnormalized.
#[derive(Debug, Clone)]
pub struct Surrogate<T: Real> {
    gamma: T,
    r: DMatrix<T>,
    sigma_inv: DMatrix<T>,
    y_k: DVector<T>,
    p: DMatrix<T>,
    mu: DVector<T>,
}

impl<T: Real> Surrogate<T> {
    pub fn new(r: &DMatrix<T>, sigma: &DMatrix<T>, y_k: &DVector<T>, eta: T) -> Result<Self> {
        let n = y_k.len();
        if r.shape() != (n, n) || sigma.shape() != (n, n) {
            return Err(invalid("R, Σ and Y_k dimensions disagree"));
        }
        let g = gamma(eta)?;
        let sigma_inv = cholesky(sigma, "sigma")?.inverse();
        let p = r * g + &sigma_inv * (T::one() - g);
        let p_chol = Cholesky::new(p.clone())
            .ok_or_else(|| Error::NumericFailure("P = γR + (1−γ)Σ⁻¹ is not positive definite".into()))?;
        let mu = p_chol.solve(&(&sigma_inv * y_k)) * (T::one() - g);
        Ok(Self { gamma: g, r: r.clone(), sigma_inv, y_k: y_k.clone(), p, mu })
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    /// Precision of the tilted Gaussian.
    pub fn precision(&self) -> &DMatrix<T> {
        &self.p
    }

    /// Mean `μ_k` of the tilted Gaussian.
    pub fn mean(&self) -> &DVector<T> {
        &self.mu
    }

    /// `P(Y_k − μ_k)`: importance weights against `N(Y_k, P⁻¹)` are
    /// `∝ exp(−γS(Ỹ) − Ỹᵀ·tilt)`.
    pub fn tilt(&self) -> DVector<T> {
        &self.p * (&self.y_k - &self.mu)
    }

    pub fn log_density(&self, y: &DVector<T>, s_value: T, form: SurrogateForm) -> T {
        let half = T::lit(0.5);
        match form {
            SurrogateForm::Interpolation => {
                let target = -s_value - half * y.dot(&(&self.r * y));
                let d = y - &self.y_k;
                let proximal = -half * d.dot(&(&self.sigma_inv * &d));
                self.gamma * target + (T::one() - self.gamma) * proximal
            }
            SurrogateForm::Tilted => {
                let d = y - &self.mu;
                -self.gamma * s_value - half * d.dot(&(&self.p * &d))
            }
        }
    }
}

/// One-shot form of [`Surrogate::log_density`].
pub fn surrogate_logdensity<T: Real>(
    y_tilde: &DVector<T>,
    y_k: &DVector<T>,
    eta: T,
    r: &DMatrix<T>,
    sigma: &DMatrix<T>,
    s_value: T,
    form: SurrogateForm,
) -> Result<T> {
    Ok(Surrogate::new(r, sigma, y_k, eta)?.log_density(y_tilde, s_value, form))
}
