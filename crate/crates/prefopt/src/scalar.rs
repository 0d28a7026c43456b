use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar for policy and loss arithmetic: `f32` or `f64`.
///
/// All core math is generic over this trait; the crate-root aliases pin the
/// `f64` lane used by the CLI and the reference tolerances.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum<Self> + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` constant, rounding when `Self` is narrower.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("representable f64 constant")
    }

    /// Widens to `f64` for reporting and serialization.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum<Self>
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}
