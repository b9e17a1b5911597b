use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point scalar the numerics are written against: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Converts an `f64` literal. Every literal used in this crate is
    /// representable (possibly rounded) in both supported types.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable in scalar type")
    }

    /// Width of the excluded band `[1 - eps, 1]` next to the pole of the
    /// steady-state map. `1e-9` for `f64`; widened for coarser types so that
    /// `1 - eps` stays distinct from one.
    fn sing_eps() -> Self {
        Self::lit(1e-9).max(Self::epsilon() * Self::lit(8.0))
    }
}

impl<T> Scalar for T where
    T: Float + FloatConst + FromPrimitive + Debug + Display + LowerExp + Send + Sync + 'static
{
}
