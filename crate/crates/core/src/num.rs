//! Scalar abstraction shared by the geometry and metrics code.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the generic geometry and metrics routines.
///
/// Implemented for `f32` and `f64`. The pipeline itself (simulation, belief,
/// planner) runs on `f64`; see the aliases at the crate root.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Converts an `f64` constant into this scalar type.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 constant representable in scalar type")
    }

    /// Lossy conversion to `f64` for reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn of_usize(value: usize) -> Self {
        Self::from_usize(value).expect("count representable in scalar type")
    }
}

impl Real for f32 {}
impl Real for f64 {}
