//! Closed real intervals with the handful of operations the reach-set bounds need.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Serialized as a two-element array `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    from = "[T; 2]",
    into = "[T; 2]",
    bound(serialize = "T: Serialize", deserialize = "T: PartialOrd + Deserialize<'de>")
)]
pub struct Interval<T: Copy> {
    pub lo: T,
    pub hi: T,
}

impl<T: Copy + PartialOrd> From<[T; 2]> for Interval<T> {
    fn from([a, b]: [T; 2]) -> Self {
        if a <= b {
            Self { lo: a, hi: b }
        } else {
            Self { lo: b, hi: a }
        }
    }
}

impl<T: Copy> From<Interval<T>> for [T; 2] {
    fn from(iv: Interval<T>) -> Self {
        [iv.lo, iv.hi]
    }
}

impl<T: Scalar> Interval<T> {
    /// Builds `[lo, hi]`; the bounds are swapped if given in the wrong order.
    pub fn new(lo: T, hi: T) -> Self {
        if lo <= hi {
            Self { lo, hi }
        } else {
            Self { lo: hi, hi: lo }
        }
    }

    pub fn point(v: T) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> T {
        self.lo + (self.hi - self.lo) / T::lit(2.0)
    }

    pub fn contains(&self, v: T) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn contains_interval(&self, other: &Self) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn intersects(&self, other: &Self) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn hull(&self, other: &Self) -> Self {
        Self {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            lo: self.lo + other.lo,
            hi: self.hi + other.hi,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            lo: self.lo - other.hi,
            hi: self.hi - other.lo,
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let c = [
            self.lo * other.lo,
            self.lo * other.hi,
            self.hi * other.lo,
            self.hi * other.hi,
        ];
        let mut lo = c[0];
        let mut hi = c[0];
        for &v in &c[1..] {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Self { lo, hi }
    }

    pub fn scale(&self, k: T) -> Self {
        Self::new(self.lo * k, self.hi * k)
    }

    pub fn shift(&self, k: T) -> Self {
        Self {
            lo: self.lo + k,
            hi: self.hi + k,
        }
    }

    pub fn clamp_to(&self, bounds: &Self) -> Self {
        Self {
            lo: self.lo.max(bounds.lo).min(bounds.hi),
            hi: self.hi.min(bounds.hi).max(bounds.lo),
        }
    }

    /// Widens both ends outward by `eps`, absorbing rounding in the endpoint evaluations.
    pub fn inflate(&self, eps: T) -> Self {
        Self {
            lo: self.lo - eps,
            hi: self.hi + eps,
        }
    }

    /// Range of `cos` over the interval. Interior extrema sit at multiples of π.
    pub fn cos(&self) -> Self {
        let pi = T::lit(std::f64::consts::PI);
        self.trig(T::zero(), pi, |t| t.cos())
    }

    /// Range of `sin`. Interior extrema sit at π/2 + kπ.
    pub fn sin(&self) -> Self {
        let pi = T::lit(std::f64::consts::PI);
        self.trig(pi / T::lit(2.0), pi, |t| t.sin())
    }

    // `offset + k * period` are the critical points; even k is a maximum.
    fn trig(&self, offset: T, period: T, f: impl Fn(T) -> T) -> Self {
        let two_pi = period + period;
        if self.width() >= two_pi {
            return Self::new(-T::one(), T::one());
        }
        let a = f(self.lo);
        let b = f(self.hi);
        let mut lo = a.min(b);
        let mut hi = a.max(b);
        let first = ((self.lo - offset) / period).ceil();
        let mut k = first;
        while offset + k * period <= self.hi {
            let even = (k / T::lit(2.0)).fract() == T::zero();
            if even {
                hi = T::one();
            } else {
                lo = -T::one();
            }
            k = k + T::one();
        }
        Self { lo, hi }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn dense_range(iv: Interval<f64>, f: impl Fn(f64) -> f64) -> (f64, f64) {
        let n = 20_000;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..=n {
            let t = iv.lo + iv.width() * i as f64 / n as f64;
            lo = lo.min(f(t));
            hi = hi.max(f(t));
        }
        (lo, hi)
    }

    #[test]
    fn cos_and_sin_enclose_dense_samples() {
        let cases = [
            (-0.1, 0.1),
            (0.5, 2.0),
            (-PI, -PI + 0.3),
            (2.5, 3.9),
            (-4.0, -1.0),
            (1.0, 7.0),
            (-7.5, 0.0),
        ];
        for (a, b) in cases {
            let iv = Interval::new(a, b);
            for (enc, f) in [
                (iv.cos(), f64::cos as fn(f64) -> f64),
                (iv.sin(), f64::sin as fn(f64) -> f64),
            ] {
                let (lo, hi) = dense_range(iv, f);
                assert!(enc.lo <= lo + 1e-12 && hi <= enc.hi + 1e-12, "{a} {b}");
                // enclosure is the exact range up to sampling resolution
                assert!(lo - enc.lo < 1e-6 && enc.hi - hi < 1e-6, "{a} {b}");
            }
        }
    }

    #[test]
    fn mul_sign_cases() {
        let a = Interval::new(-1.0, 2.0);
        let b = Interval::new(-3.0, 0.5);
        assert_eq!(a.mul(&b), Interval::new(-6.0, 3.0));
        let c = Interval::new(1.0f32, 2.0);
        assert_eq!(c.mul(&c), Interval::new(1.0, 4.0));
    }

    #[test]
    fn clamp_keeps_order() {
        let iv = Interval::new(2.5, 4.0).clamp_to(&Interval::new(-3.0, 3.0));
        assert_eq!(iv, Interval::new(2.5, 3.0));
        let iv = Interval::new(3.5, 4.0).clamp_to(&Interval::new(-3.0, 3.0));
        assert_eq!(iv, Interval::new(3.0, 3.0));
    }
}
