//! Scalar abstraction for the numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Real scalar: f32 or f64.
///
/// Generic numeric code (moving averages, kernels, pooling, optimizer
/// steps) is written against this trait; the pipeline instantiates it at
/// [`crate::Scalar`].
pub trait Real: Float + FromPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static {
    /// Lossless conversion from `f64` literals used for fixed constants.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }

    /// Conversion from a count.
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("count representable in scalar type")
    }
}

impl Real for f32 {}
impl Real for f64 {}
