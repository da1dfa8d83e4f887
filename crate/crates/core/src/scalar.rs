//! Floating-point scalar abstraction shared by the numerical modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// A real scalar the networks, dynamics and estimators can be instantiated with.
pub trait Scalar:
    Float + FromPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` constant into this scalar.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }

    /// Widens to `f64` (exact for `f32` and `f64`).
    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Scalars usable with the dense linear algebra (Riccati, Cholesky).
pub trait LinalgScalar: Scalar + nalgebra::RealField {}

impl LinalgScalar for f32 {}
impl LinalgScalar for f64 {}

pub(crate) fn all_finite<T: Scalar>(xs: &[T]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

/// Squared Γ-weighted norm `xᵀ Γ x`, with `Γ` row-major `n×n`.
pub fn weighted_sq_norm<T: Scalar>(x: &[T], gamma: &[T]) -> T {
    let n = x.len();
    debug_assert_eq!(gamma.len(), n * n);
    let mut acc = T::zero();
    for i in 0..n {
        let mut row = T::zero();
        for j in 0..n {
            row = row + gamma[i * n + j] * x[j];
        }
        acc = acc + x[i] * row;
    }
    acc
}

pub fn sq_norm<T: Scalar>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |acc, &v| acc + v * v)
}

#[allow(dead_code)]
pub(crate) fn to_f64_vec<T: ToPrimitive + Copy>(xs: &[T]) -> Vec<f64> {
    xs.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect()
}
