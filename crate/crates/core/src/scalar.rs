//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra as na;
use num_traits as nt;

/// Real floating-point scalar usable by the linear algebra and the samplers.
pub trait Real:
    na::RealField
    + na::Scalar
    + Copy
    + nt::FromPrimitive
    + nt::ToPrimitive
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal; exact for `f64`, rounded for `f32`.
    fn lit(x: f64) -> Self {
        <Self as nt::FromPrimitive>::from_f64(x).expect("finite f64 converts to any Real")
    }

    /// Widens to `f64` for serialization and reporting.
    fn as_f64(self) -> f64 {
        <Self as nt::ToPrimitive>::to_f64(&self).expect("Real always widens to f64")
    }

    fn from_count(n: usize) -> Self {
        <Self as nt::FromPrimitive>::from_usize(n).expect("usize converts to Real")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::Real;

    #[test]
    fn literal_round_trip() {
        assert_eq!(<f64 as Real>::lit(0.1), 0.1);
        assert_eq!(<f32 as Real>::lit(0.5), 0.5f32);
        assert_eq!(<f32 as Real>::lit(0.1).as_f64(), 0.1f32 as f64);
    }
}
