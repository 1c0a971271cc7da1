//! Continuous parametric systems with additive Gaussian noise.
//!
//! The shipped instance is a discrete-time Dubins vehicle with state
//! `(x, y, θ, V)` and inputs `(u, u′)`:
//!
//! ```text
//! x' = x + δ V cos θ
//! y' = y + δ V sin θ
//! θ' = θ + δ (α u + w),   w ~ N(0, σ²)
//! V' = β V + δ u′
//! ```
//!
//! with steering sensitivity `α` and drag `β` known only up to a box.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::DynamicsError;
use crate::Interval;

/// Bounds rounding error in reach-box endpoints (all quantities are O(10)).
const REACH_SLACK: f64 = 1e-10;

/// A system `s' = f(s, u, p) + noise` with parameters `p` in a box.
pub trait ParametricSystem: Sync {
    fn dim(&self) -> usize;
    fn input_bounds(&self) -> Vec<Interval>;
    fn input_names(&self) -> Vec<&'static str>;
    fn state_names(&self) -> Vec<&'static str>;
    fn param_box(&self) -> Vec<Interval>;
    /// Standard deviation of the additive noise in each state dimension; 0 for none.
    fn noise_std(&self) -> Vec<f64>;
    /// For wrapping dimensions, the fundamental interval `[lo, lo + period)`.
    fn periodic(&self) -> Vec<Option<Interval>>;
    /// Noiseless successor for a concrete parameter vector.
    fn mean(&self, s: &[f64], u: &[f64], p: &[f64]) -> Result<Vec<f64>, DynamicsError>;
    /// Box containing `mean(s, u, p)` for every `s` in `cell` and `p` in the
    /// parameter box. Periodic dimensions are returned unwrapped.
    fn reach(&self, cell: &[Interval], u: &[f64]) -> Result<Vec<Interval>, DynamicsError>;

    fn sample_next<R: Rng + ?Sized>(&self, s: &[f64], u: &[f64], p: &[f64], rng: &mut R) -> Result<Vec<f64>, DynamicsError> {
        let mut next = self.mean(s, u, p)?;
        for ((x, sd), per) in next.iter_mut().zip(self.noise_std()).zip(self.periodic()) {
            if sd > 0.0 {
                let w: f64 = rng.sample(StandardNormal);
                *x += sd * w;
            }
            if let Some(base) = per {
                *x = wrap(*x, base);
            }
        }
        Ok(next)
    }
}

/// Maps `v` into `[base.lo, base.hi)` modulo the period `base.width()`.
pub fn wrap(v: f64, base: Interval) -> f64 {
    let period = base.width();
    let mut w = v - period * ((v - base.lo) / period).floor();
    if w >= base.hi {
        w = base.lo;
    }
    if w < base.lo {
        w = base.lo;
    }
    w
}

pub fn wrap_angle(theta: f64) -> f64 {
    wrap(theta, Interval::new(-PI, PI))
}

/// How the `N(0, value)` noise parameter is read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseReading {
    #[default]
    Variance,
    StdDev,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClampPolicy {
    /// Saturate the speed at its bounds.
    #[default]
    Clamp,
    /// Leave the speed unconstrained; leaving the grid then counts as failure.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DubinsParams {
    pub delta: f64,
    pub alpha: Interval,
    pub beta: Interval,
    pub noise: f64,
    #[serde(default)]
    pub noise_reading: NoiseReading,
    pub steer: Interval,
    pub accel: Interval,
    pub speed: Interval,
    #[serde(default)]
    pub clamp: ClampPolicy,
}

impl Default for DubinsParams {
    fn default() -> Self {
        Self {
            delta: 0.5,
            alpha: Interval::new(0.8, 0.9),
            beta: Interval::new(0.8, 0.9),
            noise: 0.1,
            noise_reading: NoiseReading::Variance,
            steer: Interval::new(-PI / 2.0, PI / 2.0),
            accel: Interval::new(-5.0, 5.0),
            speed: Interval::new(-3.0, 3.0),
            clamp: ClampPolicy::Clamp,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVec {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    #[serde(rename = "V")]
    pub v: f64,
}

impl StateVec {
    pub fn new(x: f64, y: f64, theta: f64, v: f64) -> Self {
        Self { x, y, theta, v }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.theta, self.v]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::new(s[0], s[1], s[2], s[3])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box4 {
    pub x: Interval,
    pub y: Interval,
    pub theta: Interval,
    #[serde(rename = "V")]
    pub v: Interval,
}

impl Box4 {
    pub fn to_array(self) -> [Interval; 4] {
        [self.x, self.y, self.theta, self.v]
    }

    pub fn from_slice(b: &[Interval]) -> Self {
        Self {
            x: b[0],
            y: b[1],
            theta: b[2],
            v: b[3],
        }
    }

    pub fn point(s: StateVec) -> Self {
        Self {
            x: Interval::point(s.x),
            y: Interval::point(s.y),
            theta: Interval::point(s.theta),
            v: Interval::point(s.v),
        }
    }

    pub fn contains(&self, s: StateVec) -> bool {
        self.x.contains(s.x) && self.y.contains(s.y) && self.theta.contains(s.theta) && self.v.contains(s.v)
    }
}

fn check_input(name: &'static str, value: f64, bounds: Interval) -> Result<(), DynamicsError> {
    let tol = 1e-12 * (1.0 + bounds.lo.abs().max(bounds.hi.abs()));
    if value.is_finite() && value >= bounds.lo - tol && value <= bounds.hi + tol {
        Ok(())
    } else {
        Err(DynamicsError::InputOutOfBounds {
            name,
            value,
            lo: bounds.lo,
            hi: bounds.hi,
        })
    }
}

impl DubinsParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |m: &str| Err(DynamicsError::InvalidParams(m.into()));
        if !(self.delta > 0.0) {
            return bad("time step must be positive");
        }
        if !(self.alpha.lo > 0.0 && self.beta.lo > 0.0) {
            return bad("steering sensitivity and drag must be positive");
        }
        if !(self.noise > 0.0) {
            return bad("noise parameter must be positive");
        }
        if !(self.speed.lo < self.speed.hi) {
            return bad("empty speed range");
        }
        Ok(())
    }

    /// Standard deviation of `w`.
    pub fn sigma(&self) -> f64 {
        match self.noise_reading {
            NoiseReading::Variance => self.noise.sqrt(),
            NoiseReading::StdDev => self.noise,
        }
    }

    /// Standard deviation of the heading increment, `δσ`.
    pub fn heading_std(&self) -> f64 {
        self.delta * self.sigma()
    }

    /// Copy with a different parameter box.
    pub fn with_box(&self, alpha: Interval, beta: Interval) -> Self {
        Self {
            alpha,
            beta,
            ..self.clone()
        }
    }

    fn clamp_speed(&self, v: f64) -> f64 {
        match self.clamp {
            ClampPolicy::Clamp => v.clamp(self.speed.lo, self.speed.hi),
            ClampPolicy::None => v,
        }
    }

    /// Noiseless successor for concrete `(α, β)`.
    pub fn step_mean(&self, s: StateVec, u: [f64; 2], alpha: f64, beta: f64) -> Result<StateVec, DynamicsError> {
        check_input("u", u[0], self.steer)?;
        check_input("u'", u[1], self.accel)?;
        let d = self.delta;
        Ok(StateVec {
            x: s.x + d * s.v * s.theta.cos(),
            y: s.y + d * s.v * s.theta.sin(),
            theta: wrap_angle(s.theta + d * alpha * u[0]),
            v: self.clamp_speed(beta * s.v + d * u[1]),
        })
    }

    pub fn step_sample<R: Rng + ?Sized>(
        &self,
        s: StateVec,
        u: [f64; 2],
        alpha: f64,
        beta: f64,
        rng: &mut R,
    ) -> Result<StateVec, DynamicsError> {
        let mut next = self.step_mean(s, u, alpha, beta)?;
        let w: f64 = rng.sample(StandardNormal);
        next.theta = wrap_angle(next.theta + self.heading_std() * w);
        Ok(next)
    }

    /// Enclosure of `step_mean` over the cell and the parameter box. The
    /// heading is returned unwrapped.
    pub fn reach_box(&self, cell: &Box4, u: [f64; 2]) -> Result<Box4, DynamicsError> {
        check_input("u", u[0], self.steer)?;
        check_input("u'", u[1], self.accel)?;
        if cell.theta.width() > 2.0 * PI {
            return Err(DynamicsError::HeadingTooWide(cell.theta.lo, cell.theta.hi));
        }
        let d = self.delta;
        let vx = cell.v.mul(&cell.theta.cos()).scale(d);
        let vy = cell.v.mul(&cell.theta.sin()).scale(d);
        let theta = cell.theta.add(&self.alpha.scale(d * u[0]));
        let mut v = self.beta.mul(&cell.v).shift(d * u[1]).inflate(REACH_SLACK);
        // clamping is exact, so it goes after the slack
        if self.clamp == ClampPolicy::Clamp {
            v = v.clamp_to(&self.speed);
        }
        Ok(Box4 {
            x: cell.x.add(&vx).inflate(REACH_SLACK),
            y: cell.y.add(&vy).inflate(REACH_SLACK),
            theta: theta.inflate(REACH_SLACK),
            v,
        })
    }
}

impl ParametricSystem for DubinsParams {
    fn dim(&self) -> usize {
        4
    }

    fn input_bounds(&self) -> Vec<Interval> {
        vec![self.steer, self.accel]
    }

    fn input_names(&self) -> Vec<&'static str> {
        vec!["u", "u'"]
    }

    fn state_names(&self) -> Vec<&'static str> {
        vec!["x", "y", "theta", "V"]
    }

    fn param_box(&self) -> Vec<Interval> {
        vec![self.alpha, self.beta]
    }

    fn noise_std(&self) -> Vec<f64> {
        vec![0.0, 0.0, self.heading_std(), 0.0]
    }

    fn periodic(&self) -> Vec<Option<Interval>> {
        vec![None, None, Some(Interval::new(-PI, PI)), None]
    }

    fn mean(&self, s: &[f64], u: &[f64], p: &[f64]) -> Result<Vec<f64>, DynamicsError> {
        Ok(self
            .step_mean(StateVec::from_slice(s), [u[0], u[1]], p[0], p[1])?
            .to_array()
            .to_vec())
    }

    fn reach(&self, cell: &[Interval], u: &[f64]) -> Result<Vec<Interval>, DynamicsError> {
        Ok(self.reach_box(&Box4::from_slice(cell), [u[0], u[1]])?.to_array().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> DubinsParams {
        DubinsParams::default()
    }

    #[test]
    fn zero_speed_fixed_point() {
        let p = params();
        let s = StateVec::new(1.0, 2.0, 0.3, 0.0);
        assert_eq!(p.step_mean(s, [0.0, 0.0], 0.85, 1.0).unwrap(), s);
    }

    #[test]
    fn straight_line() {
        let s = params().step_mean(StateVec::new(0.0, 0.0, 0.0, 2.0), [0.0, 0.0], 0.85, 1.0).unwrap();
        assert_eq!((s.x, s.y), (1.0, 0.0));
    }

    #[test]
    fn hand_computed_step() {
        let s = params()
            .step_mean(StateVec::new(0.0, 0.0, 0.0, 2.0), [PI / 4.0, 1.0], 0.85, 0.85)
            .unwrap();
        assert!((s.x - 1.0).abs() < 1e-15);
        assert_eq!(s.y, 0.0);
        // 0.5 * 0.85 * π/4
        assert!((s.theta - 0.333_794_219_443_915_5).abs() < 1e-12);
        assert!((s.v - 2.2).abs() < 1e-15);
    }

    #[test]
    fn inputs_are_checked() {
        let p = params();
        let s = StateVec::new(0.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            p.step_mean(s, [2.0, 0.0], 0.85, 0.85),
            Err(DynamicsError::InputOutOfBounds { name: "u", .. })
        ));
        assert!(p.step_mean(s, [0.0, -5.5], 0.85, 0.85).is_err());
    }

    #[test]
    fn speed_is_clamped_and_heading_wrapped() {
        let p = params();
        let s = p.step_mean(StateVec::new(0.0, 0.0, 3.0, 3.0), [PI / 2.0, 5.0], 0.9, 0.9).unwrap();
        assert_eq!(s.v, 3.0);
        assert!(s.theta >= -PI && s.theta < PI);
        assert!((s.theta - (3.0 + 0.45 * PI / 2.0 - 2.0 * PI)).abs() < 1e-12);
        let free = DubinsParams {
            clamp: ClampPolicy::None,
            ..params()
        };
        assert!(free.step_mean(StateVec::new(0.0, 0.0, 0.0, 3.0), [0.0, 5.0], 0.9, 0.9).unwrap().v > 3.0);
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_angle(PI), -PI);
        assert_eq!(wrap_angle(-PI), -PI);
        assert!((wrap_angle(7.0) - (7.0 - 2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn sampling_is_deterministic_and_has_the_right_spread() {
        let p = params();
        let s = StateVec::new(0.0, 0.0, 0.0, 1.0);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            p.step_sample(s, [0.0, 0.0], 0.85, 0.85, &mut rng).unwrap()
        };
        assert_eq!(draw(9), draw(9));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut sq = 0.0;
        for _ in 0..n {
            let t = p.step_sample(s, [0.0, 0.0], 0.85, 0.85, &mut rng).unwrap().theta;
            sq += t * t;
        }
        let sd = (sq / n as f64).sqrt();
        assert!((sd / p.heading_std() - 1.0).abs() < 0.02, "{sd}");
    }

    #[test]
    fn point_cell_reach_box_is_the_step() {
        let p = params().with_box(Interval::point(0.85), Interval::point(0.85));
        let s = StateVec::new(0.3, -1.0, 0.7, 1.5);
        let b = p.reach_box(&Box4::point(s), [0.4, -1.0]).unwrap();
        let m = p.step_mean(s, [0.4, -1.0], 0.85, 0.85).unwrap();
        for (iv, v) in b.to_array().iter().zip(m.to_array()) {
            assert!(iv.contains(v) && iv.width() < 1e-9);
        }
    }

    #[test]
    fn reach_box_x_increment() {
        let p = params();
        let cell = Box4 {
            x: Interval::point(0.0),
            y: Interval::point(0.0),
            theta: Interval::new(-0.1, 0.1),
            v: Interval::new(1.0, 2.0),
        };
        let b = p.reach_box(&cell, [0.0, 0.0]).unwrap();
        assert!((b.x.lo - 0.5 * 0.1f64.cos()).abs() < 1e-9);
        assert!((b.x.hi - 1.0).abs() < 1e-9);
    }

    #[test]
    fn clamped_speed_stays_inside_the_speed_range() {
        let p = params();
        let cell = Box4 {
            x: Interval::new(0.0, 1.0),
            y: Interval::new(0.0, 1.0),
            theta: Interval::new(-0.2, 0.2),
            v: Interval::new(2.0, 3.0),
        };
        let b = p.reach_box(&cell, [0.0, 5.0]).unwrap();
        assert_eq!(b.v, Interval::new(3.0, 3.0));
        let b = p.reach_box(&cell, [0.0, -5.0]).unwrap();
        assert!(b.v.lo >= -3.0 && b.v.hi <= 3.0);
    }

    #[test]
    fn reach_box_rejects_wide_heading() {
        let cell = Box4 {
            x: Interval::point(0.0),
            y: Interval::point(0.0),
            theta: Interval::new(-4.0, 4.0),
            v: Interval::point(0.0),
        };
        assert!(matches!(
            params().reach_box(&cell, [0.0, 0.0]),
            Err(DynamicsError::HeadingTooWide(..))
        ));
    }

    #[test]
    fn reach_box_contains_samples() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let lo = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-PI..PI), rng.random_range(-3.0..2.0)];
            let w = [rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), rng.random_range(0.0..1.5), rng.random_range(0.0..1.0)];
            let cell = Box4::from_slice(&(0..4).map(|i| Interval::new(lo[i], lo[i] + w[i])).collect::<Vec<_>>());
            let u = [rng.random_range(-PI / 2.0..PI / 2.0), rng.random_range(-5.0..5.0)];
            let b = p.reach_box(&cell, u).unwrap();
            for _ in 0..50 {
                let s = StateVec::new(
                    rng.random_range(cell.x.lo..=cell.x.hi),
                    rng.random_range(cell.y.lo..=cell.y.hi),
                    rng.random_range(cell.theta.lo..=cell.theta.hi),
                    rng.random_range(cell.v.lo..=cell.v.hi),
                );
                let (a, be) = (rng.random_range(0.8..=0.9), rng.random_range(0.8..=0.9));
                let d = p.delta;
                // unwrapped heading for the containment check
                let theta = s.theta + d * a * u[0];
                let m = p.step_mean(s, u, a, be).unwrap();
                assert!(b.x.contains(m.x) && b.y.contains(m.y) && b.v.contains(m.v));
                assert!(b.theta.contains(theta));
            }
        }
    }

    #[test]
    fn halving_the_cell_never_enlarges_the_reach_box() {
        let p = params();
        let cell = Box4 {
            x: Interval::new(0.0, 1.0),
            y: Interval::new(0.0, 1.0),
            theta: Interval::new(-0.4, 0.4),
            v: Interval::new(-0.5, 1.0),
        };
        let whole = p.reach_box(&cell, [0.3, 1.0]).unwrap();
        let half = Box4 {
            theta: Interval::new(0.0, 0.4),
            v: Interval::new(0.25, 1.0),
            ..cell
        };
        let part = p.reach_box(&half, [0.3, 1.0]).unwrap();
        for (w, h) in whole.to_array().iter().zip(part.to_array()) {
            assert!(w.contains_interval(&h));
        }
    }
}
