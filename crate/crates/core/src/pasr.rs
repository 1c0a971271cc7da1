//! Probabilistic alternating simulation between finite robust MDPs.
//!
//! A single-valued relation `R ⊆ X1 × X2` is checked as a simulation from the
//! abstract model `m2` to the concrete model `m1`:
//!
//! 1. the initial distributions are related by the lifting of `R`;
//! 2. for every `(x1, x2) ∈ R`: `∀u2 ∃u1 ∀v1 ∃v2` such that
//!    `(T1(·|x1,u1,v1), T2(·|x2,u2,v2))` is in the lifting;
//! 3. related states carry equal labels.
//!
//! Condition 2 reads as a game: an antagonist picks `u2` and `v1`, a
//! protagonist answers with `u1` and `v2`. The protagonist's winning answers
//! form the interface table, which refines any abstract policy into a concrete
//! one whose worst-case reach-avoid probability is at least the abstract one.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{check_lifting, CutCertificate, Lifting};
use crate::error::PasrError;
use crate::model::{one_step_label_distribution, FiniteDistribution, FiniteRmdp, MarkovPolicy, StateRelation};
use crate::objective::{pin_of, Pin, ReachAvoidSpec};
use crate::scalar::{compensated_sum, Scalar};

/// Which of the three simulation conditions failed, with the smallest
/// falsifying assignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Counterexample {
    /// Initial distributions are not related; carries the violated cut.
    Initial { certificate: CutCertificate<f64> },
    /// No `u1` answers the antagonist's `u2`. `refutations` lists, for every
    /// candidate `u1`, the first `v1` for which no `v2` yields related successors.
    Transition {
        x1: usize,
        x2: usize,
        u2: usize,
        names: (String, String, String),
        refutations: Vec<Refutation>,
    },
    /// Related states with different labels.
    Label {
        x1: usize,
        x2: usize,
        names: (String, String),
        labels1: Vec<String>,
        labels2: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Refutation {
    pub u1: usize,
    pub v1: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PasrReport {
    pub holds: bool,
    pub failed_condition: Option<u8>,
    pub counterexample: Option<Counterexample>,
}

impl PasrReport {
    fn pass() -> Self {
        Self {
            holds: true,
            failed_condition: None,
            counterexample: None,
        }
    }

    fn fail(condition: u8, cex: Counterexample) -> Self {
        Self {
            holds: false,
            failed_condition: Some(condition),
            counterexample: Some(cex),
        }
    }
}

/// One protagonist answer: a concrete action and, per concrete disturbance,
/// the abstract disturbance that keeps successors related.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterfaceEntry {
    pub u1: usize,
    pub response: Vec<usize>,
}

/// Interface map `(x1, x2, u2) → {u1}` over `R × U2`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InterfaceTable {
    cells: BTreeMap<(usize, usize, usize), Vec<InterfaceEntry>>,
}

impl InterfaceTable {
    pub fn get(&self, x1: usize, x2: usize, u2: usize) -> Option<&[InterfaceEntry]> {
        self.cells.get(&(x1, x2, u2)).map(Vec::as_slice)
    }

    pub fn cells(&self) -> impl Iterator<Item = ((usize, usize, usize), &[InterfaceEntry])> {
        self.cells.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Mutable access for negative-control tests.
    pub fn get_mut(&mut self, x1: usize, x2: usize, u2: usize) -> Option<&mut Vec<InterfaceEntry>> {
        self.cells.get_mut(&(x1, x2, u2))
    }
}

fn check_inputs<T: Scalar>(m1: &FiniteRmdp<T>, m2: &FiniteRmdp<T>, rel: &StateRelation) -> Result<(), PasrError> {
    if m1.alphabet() != m2.alphabet() {
        return Err(PasrError::AlphabetMismatch);
    }
    if rel.left_size() != m1.n_states() || rel.right_size() != m2.n_states() {
        return Err(PasrError::RelationShape);
    }
    if let Some(x1) = (0..rel.left_size()).find(|&x| rel.single(x).is_none()) {
        return Err(PasrError::NotSingleValued(x1));
    }
    Ok(())
}

fn lifted<T: Scalar>(
    d1: &FiniteDistribution<T>,
    d2: &FiniteDistribution<T>,
    rel: &StateRelation,
) -> Result<bool, PasrError> {
    Ok(check_lifting(d1, d2, rel)?.is_feasible())
}

struct CellOutcome {
    winners: Vec<InterfaceEntry>,
    refutations: Vec<Refutation>,
}

// Exhaustive ∃u1 ∀v1 ∃v2 evaluation for one antagonist move.
fn evaluate_cell<T: Scalar>(
    m1: &FiniteRmdp<T>,
    m2: &FiniteRmdp<T>,
    rel: &StateRelation,
    x1: usize,
    x2: usize,
    u2: usize,
) -> Result<CellOutcome, PasrError> {
    let mut winners = Vec::new();
    let mut refutations = Vec::new();
    'u1: for u1 in 0..m1.n_actions() {
        let mut response = Vec::with_capacity(m1.n_disturbances());
        for v1 in 0..m1.n_disturbances() {
            let d1 = m1.kernel(x1, u1, v1);
            let mut answer = None;
            for v2 in 0..m2.n_disturbances() {
                if lifted(d1, m2.kernel(x2, u2, v2), rel)? {
                    answer = Some(v2);
                    break;
                }
            }
            match answer {
                Some(v2) => response.push(v2),
                None => {
                    refutations.push(Refutation { u1, v1 });
                    continue 'u1;
                }
            }
        }
        winners.push(InterfaceEntry { u1, response });
    }
    Ok(CellOutcome { winners, refutations })
}

fn label_names<T: Scalar>(m: &FiniteRmdp<T>, x: usize) -> Vec<String> {
    m.label(x).indices().map(|i| m.alphabet()[i].clone()).collect()
}

/// Checks the three simulation conditions from `m2` to `m1`.
pub fn check_pasr<T: Scalar>(m1: &FiniteRmdp<T>, m2: &FiniteRmdp<T>, rel: &StateRelation) -> Result<PasrReport, PasrError> {
    check_inputs(m1, m2, rel)?;

    if let Lifting::Infeasible(c) = check_lifting(m1.init(), m2.init(), rel)? {
        let certificate = CutCertificate {
            subset: c.subset,
            image: c.image,
            excess: c.excess.to_f64_lossy(),
            flow: c.flow.to_f64_lossy(),
        };
        return Ok(PasrReport::fail(1, Counterexample::Initial { certificate }));
    }

    let pairs: Vec<(usize, usize)> = rel.pairs().collect();
    let failures: Vec<Option<Counterexample>> = pairs
        .par_iter()
        .map(|&(x1, x2)| -> Result<Option<Counterexample>, PasrError> {
            for u2 in 0..m2.n_actions() {
                let out = evaluate_cell(m1, m2, rel, x1, x2, u2)?;
                if out.winners.is_empty() {
                    return Ok(Some(Counterexample::Transition {
                        x1,
                        x2,
                        u2,
                        names: (
                            m1.state_names()[x1].clone(),
                            m2.state_names()[x2].clone(),
                            m2.action_names()[u2].clone(),
                        ),
                        refutations: out.refutations,
                    }));
                }
            }
            Ok(None)
        })
        .collect::<Result<_, _>>()?;
    if let Some(cex) = failures.into_iter().flatten().next() {
        return Ok(PasrReport::fail(2, cex));
    }

    for (x1, x2) in rel.pairs() {
        if m1.label(x1) != m2.label(x2) {
            return Ok(PasrReport::fail(
                3,
                Counterexample::Label {
                    x1,
                    x2,
                    names: (m1.state_names()[x1].clone(), m2.state_names()[x2].clone()),
                    labels1: label_names(m1, x1),
                    labels2: label_names(m2, x2),
                },
            ));
        }
    }
    Ok(PasrReport::pass())
}

/// Probabilistic simulation between two MDPs: the alternating check with
/// singleton disturbance sets.
pub fn check_psr<T: Scalar>(d1: &FiniteRmdp<T>, d2: &FiniteRmdp<T>, rel: &StateRelation) -> Result<PasrReport, PasrError> {
    if !d1.is_mdp() {
        return Err(PasrError::NotAnMdp(1));
    }
    if !d2.is_mdp() {
        return Err(PasrError::NotAnMdp(2));
    }
    check_pasr(d1, d2, rel)
}

/// Builds the interface table. Fails with the report if the relation is not a
/// simulation.
pub fn compute_interface<T: Scalar>(
    m1: &FiniteRmdp<T>,
    m2: &FiniteRmdp<T>,
    rel: &StateRelation,
) -> Result<InterfaceTable, PasrError> {
    let report = check_pasr(m1, m2, rel)?;
    if !report.holds {
        return Err(PasrError::NotPasr(Box::new(report)));
    }
    let keys: Vec<(usize, usize, usize)> = rel
        .pairs()
        .flat_map(|(x1, x2)| (0..m2.n_actions()).map(move |u2| (x1, x2, u2)))
        .collect();
    let cells = keys
        .par_iter()
        .map(|&(x1, x2, u2)| Ok(((x1, x2, u2), evaluate_cell(m1, m2, rel, x1, x2, u2)?.winners)))
        .collect::<Result<BTreeMap<_, _>, PasrError>>()?;
    Ok(InterfaceTable { cells })
}

/// Refines an abstract policy through the interface, picking the lowest
/// concrete action index in each cell. Stochastic rows keep their weights.
pub fn refine_policy<T: Scalar>(
    m1: &FiniteRmdp<T>,
    m2: &FiniteRmdp<T>,
    rel: &StateRelation,
    iface: &InterfaceTable,
    mu2: &MarkovPolicy<T>,
) -> Result<MarkovPolicy<T>, PasrError> {
    check_inputs(m1, m2, rel)?;
    mu2.check(m2.n_states(), m2.n_actions())?;
    let refine_step = |k: usize| -> Result<Vec<FiniteDistribution<T>>, PasrError> {
        (0..m1.n_states())
            .map(|x1| {
                let x2 = rel.single(x1).ok_or(PasrError::NotSingleValued(x1))?;
                let mut pairs = Vec::new();
                for (u2, w) in mu2.at(k, x2).iter() {
                    let u1 = iface
                        .get(x1, x2, u2)
                        .and_then(|c| c.iter().map(|e| e.u1).min())
                        .ok_or(PasrError::EmptyInterface { x1, x2, u2 })?;
                    pairs.push((u1, w));
                }
                Ok(FiniteDistribution::from_pairs(pairs)?)
            })
            .collect()
    };
    match mu2.horizon() {
        None => Ok(MarkovPolicy::stationary(refine_step(0)?)),
        Some(n) => Ok(MarkovPolicy::time_varying((0..n).map(refine_step).collect::<Result<_, _>>()?)),
    }
}

fn resolve_labels<T: Scalar>(m: &FiniteRmdp<T>, spec: &ReachAvoidSpec) -> Result<(usize, usize), PasrError> {
    let g = m
        .label_index(&spec.goal)
        .ok_or_else(|| PasrError::UnknownLabel(spec.goal.clone()))?;
    let u = m
        .label_index(&spec.unsafe_label)
        .ok_or_else(|| PasrError::UnknownLabel(spec.unsafe_label.clone()))?;
    Ok((g, u))
}

/// Worst-case reach-avoid probability under a fixed policy, within `horizon`
/// steps. The adversary sees the state but not the sampled action, and
/// minimizes pointwise at every step.
pub fn eval_min_adversary<T: Scalar>(
    m: &FiniteRmdp<T>,
    mu: &MarkovPolicy<T>,
    spec: &ReachAvoidSpec,
    horizon: usize,
) -> Result<Vec<T>, PasrError> {
    let (g, u) = resolve_labels(m, spec)?;
    if !mu.covers(horizon) {
        return Err(crate::error::ModelError::HorizonMismatch { requested: horizon }.into());
    }
    mu.check(m.n_states(), m.n_actions())?;
    let pins: Vec<Pin> = m.labels().iter().map(|&l| pin_of(l, g, u)).collect();
    let mut values: Vec<T> = pins
        .iter()
        .map(|p| if *p == Pin::Goal { T::one() } else { T::zero() })
        .collect();
    // Backward induction: the step-k decision rule acts with `horizon - k` steps to go.
    for k in (0..horizon).rev() {
        let next: Vec<T> = (0..m.n_states())
            .map(|x| match pins[x] {
                Pin::Goal => T::one(),
                Pin::Unsafe => T::zero(),
                Pin::Free => {
                    let row = mu.at(k, x);
                    (0..m.n_disturbances())
                        .map(|v| {
                            compensated_sum(row.iter().map(|(a, w)| w * m.kernel(x, a, v).expect(|s| values[s])))
                        })
                        .fold(T::infinity(), T::min)
                }
            })
            .collect();
        values = next;
    }
    Ok(values)
}

/// Both sides of the refinement inequality, weighted by initial distributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementCheck<T> {
    pub lhs: T,
    pub rhs: T,
    pub holds: bool,
}

pub fn verify_refinement_theorem<T: Scalar>(
    m1: &FiniteRmdp<T>,
    m2: &FiniteRmdp<T>,
    rel: &StateRelation,
    mu2: &MarkovPolicy<T>,
    spec: &ReachAvoidSpec,
    horizon: usize,
) -> Result<RefinementCheck<T>, PasrError> {
    let iface = compute_interface(m1, m2, rel)?;
    let mu1 = refine_policy(m1, m2, rel, &iface, mu2)?;
    let w1 = eval_min_adversary(m1, &mu1, spec, horizon)?;
    let w2 = eval_min_adversary(m2, mu2, spec, horizon)?;
    let lhs = m1.init().expect(|x| w1[x]);
    let rhs = m2.init().expect(|x| w2[x]);
    Ok(RefinementCheck {
        lhs,
        rhs,
        holds: lhs >= rhs - T::tolerance(),
    })
}

/// One-step label distributions agree on both sides for every interface
/// answer and its recorded disturbance response.
pub fn verify_label_lemma<T: Scalar>(
    m1: &FiniteRmdp<T>,
    m2: &FiniteRmdp<T>,
    rel: &StateRelation,
    iface: &InterfaceTable,
) -> Result<bool, PasrError> {
    check_inputs(m1, m2, rel)?;
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(8.0));
    for (x1, x2) in rel.pairs() {
        for u2 in 0..m2.n_actions() {
            let Some(entries) = iface.get(x1, x2, u2) else {
                return Ok(false);
            };
            for e in entries {
                if e.response.len() != m1.n_disturbances() {
                    return Ok(false);
                }
                for (v1, &v2) in e.response.iter().enumerate() {
                    if v2 >= m2.n_disturbances() {
                        return Ok(false);
                    }
                    let l1 = one_step_label_distribution(m1, x1, e.u1, v1)?;
                    let l2 = one_step_label_distribution(m2, x2, u2, v2)?;
                    let keys: std::collections::BTreeSet<_> = l1.keys().chain(l2.keys()).copied().collect();
                    for k in keys {
                        let a = l1.get(&k).copied().unwrap_or_else(T::zero);
                        let b = l2.get(&k).copied().unwrap_or_else(T::zero);
                        if (a - b).abs() > tol {
                            return Ok(false);
                        }
                    }
                }
            }
        }
    }
    Ok(true)
}
