//! Finite-difference smoothness prior and correlated perturbation sampling.
//!
//! The trajectory mean is stored as an `n_free × n_dims` matrix; every column
//! is one configuration coordinate over time. The same `R` acts independently
//! on every column, so the block-diagonal `I ⊗ R` is never materialized.
//!
//! Two boundary treatments are supported:
//!
//! * **planning** – start and goal nodes are fixed. The stencil rows are
//!   centred on the free interior nodes, and the endpoint contributions end up
//!   in a constant offset `B` so the acceleration of the full trajectory is
//!   `A·Y + B`.
//! * **control** – the sequence is padded with virtual zero nodes beyond
//!   either end of the horizon. No offset.
//!
//! Both give a tridiagonal, non-singular `A`, hence a positive definite
//! `R = AᵀA (+ ridge·I)`.

use nalgebra::{Cholesky, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::scalar::{count, Real};

/// Fixed start and goal configurations of a planning problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Endpoints<T> {
    pub start: Vec<T>,
    pub goal: Vec<T>,
}

impl<T: Real> Endpoints<T> {
    pub fn n_dims(&self) -> usize {
        self.start.len()
    }
}

/// Boundary treatment used when building the stencil operator.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorMode<T> {
    Planning(Endpoints<T>),
    Control,
}

/// Stencil operator restricted to the free nodes plus the endpoint offset.
#[derive(Debug, Clone)]
pub struct AccelerationOperator<T: Real> {
    pub matrix: DMatrix<T>,
    /// `n_free × n_dims`; present in planning mode only.
    pub offset: Option<DMatrix<T>>,
    pub endpoints: Option<Endpoints<T>>,
    pub dt: T,
}

/// Builds the second-order finite-difference operator `[1, -2, 1] / dt²`.
pub fn build_acceleration_operator<T: Real>(
    n_free: usize,
    dt: T,
    mode: OperatorMode<T>,
) -> Result<AccelerationOperator<T>> {
    if n_free < 2 {
        return Err(invalid(format!("n_free must be >= 2, got {n_free}")));
    }
    if !(dt > T::zero()) || !dt.is_finite_value() {
        return Err(invalid(format!("dt must be positive, got {}", dt.as_f64())));
    }
    let inv_dt2 = T::one() / (dt * dt);
    let two = T::lit(2.0);
    let mut matrix = DMatrix::zeros(n_free, n_free);
    for i in 0..n_free {
        if i > 0 {
            matrix[(i, i - 1)] = inv_dt2;
        }
        matrix[(i, i)] = -two * inv_dt2;
        if i + 1 < n_free {
            matrix[(i, i + 1)] = inv_dt2;
        }
    }

    let (offset, endpoints) = match mode {
        OperatorMode::Control => (None, None),
        OperatorMode::Planning(ends) => {
            if ends.start.len() != ends.goal.len() || ends.start.is_empty() {
                return Err(invalid("start and goal must have the same non-zero dimension"));
            }
            let n_dims = ends.n_dims();
            let mut b = DMatrix::zeros(n_free, n_dims);
            for d in 0..n_dims {
                b[(0, d)] += ends.start[d] * inv_dt2;
                b[(n_free - 1, d)] += ends.goal[d] * inv_dt2;
            }
            (Some(b), Some(ends))
        }
    };

    Ok(AccelerationOperator { matrix, offset, endpoints, dt })
}

/// Gaussian smoothness prior `N(0, R⁻¹)` over free trajectory nodes.
#[derive(Debug, Clone)]
pub struct SmoothnessPrior<T: Real> {
    n_free: usize,
    dt: T,
    a: DMatrix<T>,
    r: DMatrix<T>,
    l: DMatrix<T>,
    offset: Option<DMatrix<T>>,
    endpoints: Option<Endpoints<T>>,
    ridge: T,
}

/// Suggested ridge for a near-singular operator: `1e-8 · tr(AᵀA) / n`.
pub fn recommended_ridge<T: Real>(a: &DMatrix<T>) -> T {
    let r = a.transpose() * a;
    T::lit(1e-8) * r.trace() / count(r.nrows().max(1))
}

/// Forms `R = AᵀA + ridge·I` and the lower factor `L` with `L·Lᵀ = R⁻¹`.
pub fn build_prior<T: Real>(op: AccelerationOperator<T>, ridge: T) -> Result<SmoothnessPrior<T>> {
    if ridge < T::zero() || !ridge.is_finite_value() {
        return Err(invalid(format!("ridge must be >= 0, got {}", ridge.as_f64())));
    }
    let AccelerationOperator { matrix: a, offset, endpoints, dt } = op;
    let n = a.ncols();
    if n == 0 {
        return Err(invalid("operator has no columns"));
    }
    if let Some(b) = &offset {
        if b.nrows() != a.nrows() {
            return Err(invalid("offset rows must match operator rows"));
        }
    }
    let mut r = a.transpose() * &a;
    for i in 0..n {
        r[(i, i)] += ridge;
    }
    let l = inverse_factor(&r)?;
    Ok(SmoothnessPrior { n_free: n, dt, a, r, l, offset, endpoints, ridge })
}

/// Lower-triangular `L` with `L·Lᵀ = R⁻¹`.
///
/// With `J` the reversal permutation and `J R J = C Cᵀ`, `L = J C⁻ᵀ J`.
fn inverse_factor<T: Real>(r: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = r.nrows();
    let reversed = DMatrix::from_fn(n, n, |i, j| r[(n - 1 - i, n - 1 - j)]);
    let chol = Cholesky::new(reversed).ok_or_else(|| {
        let min_diag = (0..n).map(|i| r[(i, i)].as_f64()).fold(f64::INFINITY, f64::min);
        Error::NumericFailure(format!(
            "Cholesky of R failed (n = {n}, min diagonal = {min_diag:e}); consider a ridge"
        ))
    })?;
    let c_inv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::NumericFailure("singular Cholesky factor".into()))?;
    let upper = c_inv.transpose();
    Ok(DMatrix::from_fn(n, n, |i, j| upper[(n - 1 - i, n - 1 - j)]))
}

impl<T: Real> SmoothnessPrior<T> {
    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn ridge(&self) -> T {
        self.ridge
    }

    pub fn operator(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn r(&self) -> &DMatrix<T> {
        &self.r
    }

    /// Lower factor with `L·Lᵀ = R⁻¹`.
    pub fn factor(&self) -> &DMatrix<T> {
        &self.l
    }

    pub fn offset(&self) -> Option<&DMatrix<T>> {
        self.offset.as_ref()
    }

    pub fn endpoints(&self) -> Option<&Endpoints<T>> {
        self.endpoints.as_ref()
    }

    /// Dense `R⁻¹ = L·Lᵀ`.
    pub fn covariance(&self) -> DMatrix<T> {
        &self.l * self.l.transpose()
    }

    fn check_shape(&self, y: &DMatrix<T>) -> Result<()> {
        if y.nrows() != self.n_free {
            return Err(invalid(format!(
                "trajectory has {} nodes, prior expects {}",
                y.nrows(),
                self.n_free
            )));
        }
        if let Some(b) = &self.offset {
            if y.ncols() != b.ncols() {
                return Err(invalid(format!(
                    "trajectory has {} dims, endpoints have {}",
                    y.ncols(),
                    b.ncols()
                )));
            }
        }
        Ok(())
    }

    /// `½ Σ_d ‖A y_d + b_d‖² (+ ½ ridge ‖Y‖²)`, i.e. `½ tr(YᵀRY) + tr(BᵀAY) + ½‖B‖²`.
    pub fn control_energy(&self, y: &DMatrix<T>) -> Result<T> {
        self.check_shape(y)?;
        let half = T::lit(0.5);
        let ry = &self.r * y;
        let mut energy = half * y.dot(&ry);
        if let Some(b) = &self.offset {
            let ay = &self.a * y;
            energy += b.dot(&ay) + half * b.dot(b);
        }
        Ok(energy)
    }

    /// Gradient of [`control_energy`](Self::control_energy): `R·Y + Aᵀ·B`.
    pub fn energy_gradient(&self, y: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.check_shape(y)?;
        let mut g = &self.r * y;
        if let Some(b) = &self.offset {
            g += self.a.transpose() * b;
        }
        Ok(g)
    }

    /// Prepends the start and appends the goal (planning mode); control
    /// sequences are returned unchanged.
    pub fn full_trajectory(&self, y: &DMatrix<T>) -> DMatrix<T> {
        match &self.endpoints {
            None => y.clone(),
            Some(ends) => {
                let n = y.nrows();
                DMatrix::from_fn(n + 2, y.ncols(), |i, d| {
                    if i == 0 {
                        ends.start[d]
                    } else if i == n + 1 {
                        ends.goal[d]
                    } else {
                        y[(i - 1, d)]
                    }
                })
            }
        }
    }

    /// Evenly spaced free nodes on the start→goal segment (planning mode),
    /// or zeros of width `n_dims` otherwise.
    pub fn straight_line(&self, n_dims: usize) -> DMatrix<T> {
        match &self.endpoints {
            None => DMatrix::zeros(self.n_free, n_dims),
            Some(ends) => {
                let segments: T = count(self.n_free + 1);
                DMatrix::from_fn(self.n_free, ends.n_dims(), |i, d| {
                    let s = count::<T>(i + 1) / segments;
                    ends.start[d] + (ends.goal[d] - ends.start[d]) * s
                })
            }
        }
    }
}

/// Reproducibility record of a perturbation batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTag {
    pub seed: u64,
    pub iteration: u64,
}

#[derive(Debug, Clone)]
pub struct PerturbationBatch<T: Real> {
    pub eps: Vec<DMatrix<T>>,
    pub sigma_k: T,
    pub seed_tag: SeedTag,
}

impl<T: Real> PerturbationBatch<T> {
    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent random stream for one `(seed, iteration, sample)` triple.
pub fn sample_rng(seed: u64, iteration: u64, index: u64) -> ChaCha8Rng {
    let key = splitmix64(splitmix64(splitmix64(seed) ^ iteration) ^ index);
    ChaCha8Rng::seed_from_u64(key)
}

/// `√σ · L · z` for a given standard-normal matrix `z` (`n_free × n_dims`).
pub fn perturbation_from_normals<T: Real>(
    prior: &SmoothnessPrior<T>,
    sigma_k: T,
    z: &DMatrix<T>,
) -> DMatrix<T> {
    (prior.factor() * z) * sigma_k.sqrt()
}

/// Draws `m` perturbations `ε = √σ_k · L · z`, `z ~ N(0, I)` per dimension.
pub fn sample_perturbations<T: Real>(
    prior: &SmoothnessPrior<T>,
    sigma_k: T,
    m: usize,
    n_dims: usize,
    tag: SeedTag,
) -> Result<PerturbationBatch<T>> {
    if !(sigma_k > T::zero()) || !sigma_k.is_finite_value() {
        return Err(invalid(format!("sigma_k must be positive, got {}", sigma_k.as_f64())));
    }
    if m == 0 {
        return Err(invalid("sample count must be >= 1"));
    }
    if n_dims == 0 {
        return Err(invalid("n_dims must be >= 1"));
    }
    let n = prior.n_free();
    let eps = (0..m)
        .into_par_iter()
        .map(|idx| {
            let mut rng = sample_rng(tag.seed, tag.iteration, idx as u64);
            let z = DMatrix::from_fn(n, n_dims, |_, _| T::standard_normal(&mut rng));
            perturbation_from_normals(prior, sigma_k, &z)
        })
        .collect();
    Ok(PerturbationBatch { eps, sigma_k, seed_tag: tag })
}
