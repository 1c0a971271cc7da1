//! Policy synthesis for robust MDPs.
//!
//! * [`model`], [`coupling`], [`pasr`]: finite robust MDPs, liftings of state
//!   relations, and probabilistic alternating simulation with policy refinement.
//! * [`imdp`]: interval MDPs and robust value iteration for reach-avoid objectives.
//! * [`dynamics`], [`abstraction`]: continuous parametric systems (a Dubins
//!   vehicle with uncertain steering and drag) and their interval-MDP abstraction.
//! * [`refine`]: concrete controllers from abstract policies and Monte Carlo validation.
//! * [`config`]: the JSON pipeline configuration.
//!
//! Probabilistic types are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix them to `f64`, which is what the pipeline uses. The
//! continuous side (dynamics, abstraction, simulation) is `f64` only.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod abstraction;
pub mod config;
pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod imdp;
pub mod instances;
pub mod interval;
pub mod model;
pub mod objective;
pub mod pasr;
pub mod refine;
pub mod scalar;

pub use error::{AbstractionError, DynamicsError, ImdpError, ModelError, PasrError, SimulationError};
pub use objective::{Horizon, ReachAvoidSpec};
pub use scalar::Scalar;

pub type Distribution = model::FiniteDistribution<f64>;
pub type Rmdp = model::FiniteRmdp<f64>;
pub type Policy = model::MarkovPolicy<f64>;
pub type Adversary = model::MarkovAdversary<f64>;
pub type Coupling = coupling::Coupling<f64>;
pub type Interval = interval::Interval<f64>;
pub type Imdp = imdp::IntervalMdp<f64>;
pub type SolveResult = imdp::SolveResult<f64>;
