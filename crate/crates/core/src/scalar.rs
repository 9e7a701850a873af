//! Scalar abstraction shared by every numeric routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the optimizers are generic over (`f32` or `f64`).
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Serialize + DeserializeOwned + Send + Sync
{
    /// Draw one standard normal variate.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn is_finite_value(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Real for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Real for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

/// Count to scalar.
pub(crate) fn count<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable")
}
