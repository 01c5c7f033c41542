//! Scalar abstraction for the scoring math.
//!
//! Metrics, retrieval scores, and embedding similarities are written once
//! against [`Scalar`] and instantiated for `f32` and `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// floating point: f32 or f64
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable as float")
    }

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable as float")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn half() -> Self {
        Self::lit(0.5)
    }

    fn hundred() -> Self {
        Self::lit(100.0)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Harmonic mean of precision and recall, zero when both are zero.
pub(crate) fn harmonic<S: Scalar>(precision: S, recall: S) -> S {
    let denom = precision + recall;
    if denom <= S::zero() {
        S::zero()
    } else {
        (S::one() + S::one()) * precision * recall / denom
    }
}
