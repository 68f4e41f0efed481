//! Scalar abstractions shared by the whole crate.
//!
//! [`Real`] is the floating-point base type (`f32` or `f64`). [`AdScalar`]
//! is anything the simulation arithmetic can run on: either a plain `Real`
//! or a forward-mode [`Dual`](crate::ad::Dual) carrying tangents.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// floating point base type: f32 or f64
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    /// Converts an `f64` literal. Infallible for the supported types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Arithmetic the force model and objectives are written against.
///
/// Mixed operations take the base scalar on the right-hand side only.
pub trait AdScalar:
    Copy
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<<Self as AdScalar>::Base, Output = Self>
    + Sub<<Self as AdScalar>::Base, Output = Self>
    + Mul<<Self as AdScalar>::Base, Output = Self>
    + Div<<Self as AdScalar>::Base, Output = Self>
    + AddAssign
{
    type Base: Real;

    fn constant(v: Self::Base) -> Self;
    fn value(&self) -> Self::Base;
    /// Active tangent entries. Empty for plain scalars and constants.
    fn tangent(&self) -> &[Self::Base];
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn ln(self) -> Self;

    #[inline]
    fn zero() -> Self {
        Self::constant(<Self::Base as num_traits::Zero>::zero())
    }

    /// `|x|`, with the tangent sign taken from the value (zero maps to +).
    #[inline]
    fn abs(self) -> Self {
        if self.value() < <Self::Base as num_traits::Zero>::zero() {
            -self
        } else {
            self
        }
    }

    #[inline]
    fn square(self) -> Self {
        self * self
    }

    /// Value and every tangent entry finite.
    #[inline]
    fn is_finite(&self) -> bool {
        self.value().is_finite() && self.tangent().iter().all(|t| t.is_finite())
    }
}

/// A `Real` that is also its own (tangent-free) `AdScalar`, so plain
/// simulations can reuse the generic force code.
pub trait PlainScalar: Real + AdScalar<Base = Self> {}

impl<T: Real + AdScalar<Base = T>> PlainScalar for T {}

macro_rules! plain_ad_scalar {
    ($t:ty) => {
        impl AdScalar for $t {
            type Base = $t;

            #[inline]
            fn constant(v: $t) -> Self {
                v
            }
            #[inline]
            fn value(&self) -> $t {
                *self
            }
            #[inline]
            fn tangent(&self) -> &[$t] {
                &[]
            }
            #[inline]
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline]
            fn ln(self) -> Self {
                <$t>::ln(self)
            }
        }
    };
}

plain_ad_scalar!(f32);
plain_ad_scalar!(f64);
