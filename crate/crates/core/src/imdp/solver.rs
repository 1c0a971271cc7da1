//! Robust value iteration for reach-avoid objectives on interval MDPs.
//!
//! The controller maximizes over actions; nature resolves each row's
//! intervals to minimize the expected value. For a box-constrained simplex the
//! inner minimum is greedy: start every successor at `lo`, then hand the
//! remaining mass to successors in ascending value order, each up to `hi`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{IntervalMdp, Row};
use crate::error::ImdpError;
use crate::objective::{pin_of, Horizon, Pin, ReachAvoidSpec};
use crate::scalar::{compensated_sum, Scalar};

/// Sup-norm residual below which unbounded-horizon iteration stops.
pub const CONVERGENCE_THRESHOLD: f64 = 1e-6;
const MAX_SWEEPS: usize = 1_000_000;

/// Deterministic abstract policy over action ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImdpPolicy {
    Stationary(Vec<u32>),
    /// `steps[k][s]` is the action at time `k`.
    PerStep(Vec<Vec<u32>>),
}

impl ImdpPolicy {
    /// Action at time `k`; time-varying policies repeat their last step.
    pub fn action(&self, k: usize, s: usize) -> u32 {
        match self {
            ImdpPolicy::Stationary(a) => a[s],
            ImdpPolicy::PerStep(steps) => steps[k.min(steps.len() - 1)][s],
        }
    }

    pub fn n_states(&self) -> usize {
        match self {
            ImdpPolicy::Stationary(a) => a.len(),
            ImdpPolicy::PerStep(steps) => steps.first().map_or(0, Vec::len),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct SolveResult<T> {
    /// Lower bounds on the optimal worst-case satisfaction probability.
    pub values: Vec<T>,
    pub policy: ImdpPolicy,
    /// Value of the initial state.
    pub rho_star: T,
    pub iterations: usize,
    /// Sup-norm change of the last sweep.
    pub residual: T,
    pub converged: bool,
    pub horizon: Horizon,
    /// Stopping threshold used for unbounded horizons.
    pub threshold: f64,
}

/// Minimizes `Σ p_i values_i` over `{lo ≤ p ≤ hi, Σ p = 1}`, returning the
/// minimum and the minimizing distribution.
pub fn robust_expectation_lower<T: Scalar>(values: &[T], lo: &[T], hi: &[T]) -> Result<(T, Vec<T>), ImdpError> {
    if values.len() != lo.len() || lo.len() != hi.len() {
        return Err(ImdpError::Invalid("values and interval bounds differ in length".into()));
    }
    if lo.iter().zip(hi).any(|(l, h)| !(*l >= T::zero() && l <= h)) {
        return Err(ImdpError::Invalid("interval with lo > hi or lo < 0".into()));
    }
    let tol = T::tolerance();
    let sum_lo = compensated_sum(lo.iter().copied());
    let sum_hi = compensated_sum(hi.iter().copied());
    if sum_lo > T::one() + tol || sum_hi < T::one() - tol {
        return Err(ImdpError::InfeasibleRow(format!("Σlo = {sum_lo}, Σhi = {sum_hi}")));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let mut p = lo.to_vec();
    let mut budget = T::one() - sum_lo;
    for &i in &order {
        if budget <= T::zero() {
            break;
        }
        let add = (hi[i] - lo[i]).min(budget);
        p[i] = p[i] + add;
        budget = budget - add;
    }
    let value = compensated_sum(p.iter().zip(values).map(|(p, v)| *p * *v));
    Ok((value, p))
}

// Allocation-free inner step over a CSR row; `order` is scratch.
fn row_lower<T: Scalar>(row: &Row<'_, T>, values: &[T], order: &mut Vec<u32>) -> T {
    let mut acc = T::zero();
    let mut sum_lo = T::zero();
    for i in 0..row.len() {
        sum_lo = sum_lo + row.lo[i];
        acc = acc + row.lo[i] * values[row.succ[i] as usize];
    }
    let mut budget = T::one() - sum_lo;
    if budget <= T::zero() {
        return acc;
    }
    order.clear();
    order.extend(0..row.len() as u32);
    order.sort_unstable_by(|&a, &b| {
        let va = values[row.succ[a as usize] as usize];
        let vb = values[row.succ[b as usize] as usize];
        va.partial_cmp(&vb).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter() {
        let i = i as usize;
        let add = (row.hi[i] - row.lo[i]).min(budget);
        acc = acc + add * values[row.succ[i] as usize];
        budget = budget - add;
        if budget <= T::zero() {
            break;
        }
    }
    acc
}

fn pins<T: Scalar>(m: &IntervalMdp<T>, spec: &ReachAvoidSpec) -> Result<Vec<Pin>, ImdpError> {
    let g = m
        .label_index(&spec.goal)
        .ok_or_else(|| ImdpError::UnknownLabel(spec.goal.clone()))?;
    let u = m
        .label_index(&spec.unsafe_label)
        .ok_or_else(|| ImdpError::UnknownLabel(spec.unsafe_label.clone()))?;
    Ok(m.labels().iter().map(|&l| pin_of(l, g, u)).collect())
}

fn initial_values<T: Scalar>(pins: &[Pin]) -> Vec<T> {
    pins.iter()
        .map(|p| if *p == Pin::Goal { T::one() } else { T::zero() })
        .collect()
}

fn sup_diff<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| (*x - *y).abs()).fold(T::zero(), T::max)
}

// One Jacobi sweep of the optimal operator. `keep` holds the incumbent actions:
// an incumbent is replaced only by a strictly better action, which makes the
// extracted stationary policy attain the computed values.
fn optimal_sweep<T: Scalar>(m: &IntervalMdp<T>, pins: &[Pin], values: &[T], keep: &[u32]) -> (Vec<T>, Vec<u32>) {
    (0..m.n_states())
        .into_par_iter()
        .map_init(Vec::new, |order, s| match pins[s] {
            Pin::Goal => (T::one(), keep[s]),
            Pin::Unsafe => (T::zero(), keep[s]),
            Pin::Free => {
                let mut best = T::neg_infinity();
                let mut best_action = keep[s];
                let mut incumbent = T::neg_infinity();
                for row in m.rows(s) {
                    let q = row_lower(&row, values, order);
                    if q > best {
                        best = q;
                        best_action = row.action;
                    }
                    if row.action == keep[s] {
                        incumbent = q;
                    }
                }
                let action = if incumbent >= best { keep[s] } else { best_action };
                (best, action)
            }
        })
        .unzip()
}

fn policy_sweep<T: Scalar>(m: &IntervalMdp<T>, pins: &[Pin], values: &[T], actions: impl Fn(usize) -> u32 + Sync) -> Vec<T> {
    (0..m.n_states())
        .into_par_iter()
        .map_init(Vec::new, |order, s| match pins[s] {
            Pin::Goal => T::one(),
            Pin::Unsafe => T::zero(),
            Pin::Free => {
                let row = m.row(s, actions(s)).expect("policy checked against model");
                row_lower(&row, values, order)
            }
        })
        .collect()
}

/// Robust value iteration for a reach-avoid objective. Finite horizons run
/// exactly that many sweeps and return a time-indexed policy; unbounded
/// horizons iterate until the residual drops below [`CONVERGENCE_THRESHOLD`].
pub fn robust_value_iteration<T: Scalar>(m: &IntervalMdp<T>, spec: &ReachAvoidSpec) -> Result<SolveResult<T>, ImdpError> {
    m.validate()?;
    let pins = pins(m, spec)?;
    let first_actions: Vec<u32> = (0..m.n_states()).map(|s| m.actions(s)[0]).collect();
    let mut values = initial_values::<T>(&pins);
    let threshold = T::lit(CONVERGENCE_THRESHOLD);
    match spec.horizon {
        Horizon::Finite(n) => {
            let mut steps = vec![first_actions.clone(); n];
            let mut residual = T::zero();
            for i in 1..=n {
                // fresh argmax per step: lowest index among maximizers
                let (next, actions) = optimal_sweep(m, &pins, &values, &vec![u32::MAX; m.n_states()]);
                let actions = actions
                    .into_iter()
                    .zip(&first_actions)
                    .map(|(a, f)| if a == u32::MAX { *f } else { a })
                    .collect();
                residual = sup_diff(&next, &values);
                values = next;
                steps[n - i] = actions;
            }
            let policy = if n == 0 {
                ImdpPolicy::PerStep(vec![first_actions])
            } else {
                ImdpPolicy::PerStep(steps)
            };
            Ok(SolveResult {
                rho_star: values[m.initial()],
                values,
                policy,
                iterations: n,
                residual,
                converged: true,
                horizon: spec.horizon,
                threshold: CONVERGENCE_THRESHOLD,
            })
        }
        Horizon::Unbounded => {
            let mut actions = first_actions;
            let mut iterations = 0;
            let mut residual = T::infinity();
            while iterations < MAX_SWEEPS {
                let (next, next_actions) = optimal_sweep(m, &pins, &values, &actions);
                residual = sup_diff(&next, &values);
                values = next;
                actions = next_actions;
                iterations += 1;
                if residual < threshold {
                    break;
                }
            }
            Ok(SolveResult {
                rho_star: values[m.initial()],
                values,
                policy: ImdpPolicy::Stationary(actions),
                iterations,
                converged: residual < threshold,
                residual,
                horizon: spec.horizon,
                threshold: CONVERGENCE_THRESHOLD,
            })
        }
    }
}

/// Worst-case reach-avoid values of a fixed policy (same sweep semantics as
/// [`robust_value_iteration`]).
pub fn evaluate_fixed_policy<T: Scalar>(
    m: &IntervalMdp<T>,
    policy: &ImdpPolicy,
    spec: &ReachAvoidSpec,
) -> Result<Vec<T>, ImdpError> {
    let pins = pins(m, spec)?;
    if policy.n_states() != m.n_states() {
        return Err(ImdpError::Invalid(format!(
            "policy covers {} states, model has {}",
            policy.n_states(),
            m.n_states()
        )));
    }
    let n_steps = match policy {
        ImdpPolicy::Stationary(_) => 1,
        ImdpPolicy::PerStep(steps) => steps.len(),
    };
    for k in 0..n_steps {
        for s in 0..m.n_states() {
            let a = policy.action(k, s);
            if pins[s] == Pin::Free && m.row(s, a).is_none() {
                return Err(ImdpError::UnavailableAction { state: s, action: a });
            }
        }
    }
    let mut values = initial_values::<T>(&pins);
    match spec.horizon {
        Horizon::Finite(n) => {
            for i in 1..=n {
                let k = n - i;
                values = policy_sweep(m, &pins, &values, |s| policy.action(k, s));
            }
        }
        Horizon::Unbounded => {
            let threshold = T::lit(CONVERGENCE_THRESHOLD);
            for _ in 0..MAX_SWEEPS {
                let next = policy_sweep(m, &pins, &values, |s| policy.action(0, s));
                let residual = sup_diff(&next, &values);
                values = next;
                if residual < threshold {
                    break;
                }
            }
        }
    }
    Ok(values)
}
