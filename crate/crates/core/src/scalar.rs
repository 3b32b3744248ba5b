//! Scalar abstraction for the numeric kernels.
//!
//! The statistics and divergence kernels in [`crate::stats`] are written
//! against this trait so they work at f32 or f64 precision. The evaluation
//! pipeline itself runs at [`crate::Scalar`] (f64), which is required for the
//! byte-reproducible report outputs.

use std::fmt;
use std::iter::Sum;

/// Floating-point scalar: f32 or f64.
pub trait Float:
    num_traits::Float + num_traits::FromPrimitive + Sum + fmt::Debug + fmt::Display + Send + Sync + 'static
{
}

impl Float for f32 {}
impl Float for f64 {}

/// Convert an f64 literal into the scalar type.
pub fn cast<F: Float>(v: f64) -> F {
    F::from_f64(v).expect("literal out of scalar range")
}
