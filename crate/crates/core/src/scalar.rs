//! Scalar abstraction: every numeric kernel is generic over the float type.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps};

/// Floating-point scalar the library is generic over (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssignOps
    + std::fmt::Debug
    + std::fmt::Display
    + std::fmt::LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Conversion from an `f64` literal. Panics on non-representable input,
    /// which cannot happen for the finite literals used in this crate.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    /// Conversion from a mode index or count.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count fits in scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}
