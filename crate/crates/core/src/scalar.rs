//! Scalar abstraction: all numerical code is generic over [`Real`], with
//! `f64` as the precision used by the CLI and the acceptance suite.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating-point scalar the simulation math is written against.
pub trait Real:
    Float + FloatConst + FromPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant not representable")
    }
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for pulling an `f64` literal into a generic scalar type.
#[inline]
pub fn r<R: Real>(x: f64) -> R {
    R::from_f64_lossy(x)
}

/// `usize` to scalar, exact for the ranges used here.
#[inline]
pub fn rn<R: Real>(n: usize) -> R {
    R::from_usize(n).expect("usize not representable")
}
