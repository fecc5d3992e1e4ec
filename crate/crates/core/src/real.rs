//! Scalar abstraction for the numeric core.

use core::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the simulator math is generic over.
///
/// Implemented for `f32` and `f64`. Special-function kernels
/// ([`crate::radio::inverse_q`] and friends) evaluate internally in `f64`
/// and convert on the way out, so `f32` instantiations stay usable without
/// losing the accuracy of the underlying algorithms.
pub trait Real:
    Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Conversion from an `f64` literal or config value.
    #[inline]
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 value representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar value representable as f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
