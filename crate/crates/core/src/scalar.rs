use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar type used by the matrix and moment layers.
///
/// Implemented for `f32` and `f64`. The statistical layers (`gibbs`,
/// `pressure`) work in `f64` only.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + Debug + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the type.
    fn eps() -> Self;
}

impl Scalar for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Scalar for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }
}
