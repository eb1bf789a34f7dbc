//! Scalar abstraction for the geometric and energy arithmetic.

use std::fmt::Debug;

/// Floating point scalar usable by positions, legs and energy accounts.
pub trait Scalar:
    num_traits::Float + num_traits::FromPrimitive + Debug + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for literal constants.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal out of range for scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
