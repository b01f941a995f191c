use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar the numerical core is generic over.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn of(v: f64) -> Self {
        // never fails for f32/f64
        Self::from_f64(v).unwrap()
    }

    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).unwrap()
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().unwrap()
    }
}

impl Real for f32 {}
impl Real for f64 {}
