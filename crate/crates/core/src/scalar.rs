//! Scalar abstraction for the numerical core.

use nalgebra as na;
use num_traits as nt;

/// Floating point types usable by the generic geometry and dynamics code.
pub trait Real: Copy + nt::FloatConst + nt::FromPrimitive + nt::ToPrimitive + na::RealField + na::Scalar {
    /// Converts an `f64` literal or constant into `Self`.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 value representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
