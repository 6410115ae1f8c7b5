//! Element types the matrix kernels are generic over.

use std::fmt::Debug;

/// A numeric element usable in [`ColMatrix`](crate::ColMatrix) and the kernels.
///
/// Identities are produced from an existing element (`zero_like`) rather than
/// out of thin air, because fixed-point values carry their format at runtime.
pub trait Scalar: Copy + Debug + PartialEq + Send + Sync + 'static {
    /// Additive identity in the same format as `self`.
    fn zero_like(&self) -> Self;
    /// Multiplicative identity in the same format as `self`.
    fn one_like(&self) -> Self;
    /// Accumulating addition (saturating for fixed point).
    fn add(self, rhs: Self) -> Self;
    /// Product expressed in the format of `self`.
    fn mul(self, rhs: Self) -> Self;
}

macro_rules! impl_scalar_float {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            #[inline]
            fn zero_like(&self) -> Self { 0.0 }
            #[inline]
            fn one_like(&self) -> Self { 1.0 }
            #[inline]
            fn add(self, rhs: Self) -> Self { self + rhs }
            #[inline]
            fn mul(self, rhs: Self) -> Self { self * rhs }
        }
    )*};
}

// Integers are exact, which makes them convenient for oracle comparisons.
macro_rules! impl_scalar_int {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            #[inline]
            fn zero_like(&self) -> Self { 0 }
            #[inline]
            fn one_like(&self) -> Self { 1 }
            #[inline]
            fn add(self, rhs: Self) -> Self { self.wrapping_add(rhs) }
            #[inline]
            fn mul(self, rhs: Self) -> Self { self.wrapping_mul(rhs) }
        }
    )*};
}

impl_scalar_float!(f32, f64);
impl_scalar_int!(i32, i64);
