//! Floating-point abstraction shared by every kernel.
//!
//! All kernels are written once against [`Scalar`] and instantiated for
//! `f32` and `f64`. Precision experiments compare the two instantiations on
//! identical inputs.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, NumCast};

/// f32 or f64.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumCast
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Name used in reports (`"single"` / `"double"`).
    const PRECISION: &'static str;

    /// Lossy conversion from `f64` (rounds to nearest for `f32`).
    fn of(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {
    const PRECISION: &'static str = "single";
}

impl Scalar for f64 {
    const PRECISION: &'static str = "double";
}

/// Convert a slice of one precision into another.
pub fn cast_vec<S: Scalar, U: Scalar>(v: &[S]) -> Vec<U> {
    v.iter().map(|&x| U::of(x.as_f64())).collect()
}

/// Dot product with strictly ascending summation order.
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Logistic sigmoid.
pub fn sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}
