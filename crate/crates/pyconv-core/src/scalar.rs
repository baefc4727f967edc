//! Scalar abstraction so the numeric core works in `f32` or `f64`.

use num_traits::{Float, NumAssignOps};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Element type codes used by the weight-file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

/// Floating-point element type of a [`crate::Tensor`].
///
/// `f32` is the default precision for building and training networks;
/// `f64` is reserved for finite-difference gradient checking, where single
/// precision cannot resolve the 1e-5 relative-error threshold.
pub trait Scalar:
    Float + NumAssignOps + Sum + Send + Sync + Debug + Display + 'static
{
    const DTYPE: Dtype;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::F32;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::F64;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}
