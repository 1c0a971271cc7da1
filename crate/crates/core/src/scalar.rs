//! Scalar abstraction shared by the probabilistic and interval code.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumCast};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar used for probabilities and values: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumCast
    + Default
    + Debug
    + Display
    + FromStr
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Tolerance for normalization and marginal checks.
    fn tolerance() -> Self;

    /// Converts an `f64` literal. Panics only if the value is not representable at all.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    #[inline]
    fn tolerance() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    #[inline]
    fn tolerance() -> Self {
        1e-5
    }
}

/// Sum with Neumaier compensation; row sums feed tolerance checks at 1e-9.
pub fn compensated_sum<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut comp = T::zero();
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp = comp + ((sum - t) + v);
        } else {
            comp = comp + ((v - t) + sum);
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let xs = [1.0f64, 1e-16, 1e-16, -1.0];
        assert_eq!(compensated_sum(xs), 2e-16);
    }

    #[test]
    fn tolerance_per_type() {
        assert_eq!(<f64 as Scalar>::tolerance(), 1e-9);
        assert!(<f32 as Scalar>::tolerance() > f32::EPSILON);
    }
}
