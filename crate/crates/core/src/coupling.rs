//! Liftings of a state relation to finite-support distributions.
//!
//! `(Δ, Θ)` are related by the lifting of `R` iff some joint distribution `W`
//! has marginals `Δ` and `Θ` and puts all its mass on `R`. For finite supports
//! this is a transportation problem: route `Δ(x1)` from a source through
//! related pairs to `Θ(x2)` at a sink. Full flow gives the coupling; a short
//! flow gives a min cut `S ⊆ supp(Δ)` with `Δ(S) > Θ(R(S))`.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{FiniteDistribution, StateRelation};
use crate::scalar::{compensated_sum, Scalar};

/// Joint distribution witnessing a lifting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling<T> {
    pub entries: Vec<((usize, usize), T)>,
}

/// Hall-type violation: the mass of `subset` under `Δ` exceeds the mass of
/// its relational image under `Θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutCertificate<T> {
    pub subset: Vec<usize>,
    pub image: Vec<usize>,
    pub excess: T,
    pub flow: T,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Lifting<T> {
    Feasible(Coupling<T>),
    Infeasible(CutCertificate<T>),
}

impl<T> Lifting<T> {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Lifting::Feasible(_))
    }

    pub fn coupling(&self) -> Option<&Coupling<T>> {
        match self {
            Lifting::Feasible(w) => Some(w),
            Lifting::Infeasible(_) => None,
        }
    }
}

struct Edge<T> {
    to: usize,
    cap: T,
    rev: usize,
}

struct FlowNetwork<T> {
    adj: Vec<Vec<Edge<T>>>,
}

impl<T: Scalar> FlowNetwork<T> {
    fn new(n: usize) -> Self {
        Self {
            adj: (0..n).map(|_| Vec::new()).collect(),
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: T) -> (usize, usize) {
        let i = self.adj[from].len();
        let j = self.adj[to].len();
        self.adj[from].push(Edge { to, cap, rev: j });
        self.adj[to].push(Edge {
            to: from,
            cap: T::zero(),
            rev: i,
        });
        (from, i)
    }

    // Edmonds-Karp; residuals at or below `eps` count as saturated.
    fn max_flow(&mut self, s: usize, t: usize, eps: T) -> T {
        let n = self.adj.len();
        let mut total = T::zero();
        loop {
            let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
            let mut seen = vec![false; n];
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                if v == t {
                    break;
                }
                for (i, e) in self.adj[v].iter().enumerate() {
                    if !seen[e.to] && e.cap > eps {
                        seen[e.to] = true;
                        prev[e.to] = Some((v, i));
                        queue.push_back(e.to);
                    }
                }
            }
            if !seen[t] {
                return total;
            }
            let mut bottleneck = T::infinity();
            let mut v = t;
            while let Some((u, i)) = prev[v] {
                bottleneck = bottleneck.min(self.adj[u][i].cap);
                v = u;
            }
            let mut v = t;
            while let Some((u, i)) = prev[v] {
                let rev = self.adj[u][i].rev;
                self.adj[u][i].cap = self.adj[u][i].cap - bottleneck;
                self.adj[v][rev].cap = self.adj[v][rev].cap + bottleneck;
                v = u;
            }
            total = total + bottleneck;
        }
    }

    fn reachable(&self, s: usize, eps: T) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for e in &self.adj[v] {
                if !seen[e.to] && e.cap > eps {
                    seen[e.to] = true;
                    stack.push(e.to);
                }
            }
        }
        seen
    }
}

fn check_ids<T: Scalar>(
    delta: &FiniteDistribution<T>,
    theta: &FiniteDistribution<T>,
    rel: &StateRelation,
) -> Result<(), ModelError> {
    if let Some(&s) = delta.support().iter().find(|&&s| s >= rel.left_size()) {
        return Err(ModelError::UnknownId { kind: "left state", id: s });
    }
    if let Some(&s) = theta.support().iter().find(|&&s| s >= rel.right_size()) {
        return Err(ModelError::UnknownId { kind: "right state", id: s });
    }
    Ok(())
}

/// Decides whether `(delta, theta)` lies in the lifting of `rel`, returning a
/// witness coupling or a violated-cut certificate.
pub fn check_lifting<T: Scalar>(
    delta: &FiniteDistribution<T>,
    theta: &FiniteDistribution<T>,
    rel: &StateRelation,
) -> Result<Lifting<T>, ModelError> {
    check_ids(delta, theta, rel)?;

    // Fast path: Dirac against Dirac is a single relation lookup.
    if delta.is_dirac() && theta.is_dirac() {
        let (a, b) = (delta.support()[0], theta.support()[0]);
        return Ok(if rel.contains(a, b) {
            Lifting::Feasible(Coupling {
                entries: vec![((a, b), T::one())],
            })
        } else {
            Lifting::Infeasible(CutCertificate {
                subset: vec![a],
                image: Vec::new(),
                excess: T::one(),
                flow: T::zero(),
            })
        });
    }

    let n1 = delta.len();
    let n2 = theta.len();
    let source = n1 + n2;
    let sink = source + 1;
    let mut net = FlowNetwork::new(n1 + n2 + 2);
    let right_pos = |b: usize| theta.support().iter().position(|&s| s == b);

    for (i, (_, p)) in delta.iter().enumerate() {
        net.add_edge(source, i, p);
    }
    for (j, (_, q)) in theta.iter().enumerate() {
        net.add_edge(n1 + j, sink, q);
    }
    // Middle capacity exceeds any total mass, so a min cut never uses it.
    let big = T::lit(2.0);
    let mut middle = Vec::new();
    for (i, &a) in delta.support().iter().enumerate() {
        for &b in rel.image(a) {
            if let Some(j) = right_pos(b) {
                let h = net.add_edge(i, n1 + j, big);
                middle.push((a, b, h));
            }
        }
    }

    let eps = T::epsilon() * T::lit(16.0);
    let flow = net.max_flow(source, sink, eps);

    if flow >= T::one() - T::tolerance() {
        let entries = middle
            .into_iter()
            .filter_map(|(a, b, (u, i))| {
                let used = big - net.adj[u][i].cap;
                (used > T::zero()).then_some(((a, b), used))
            })
            .collect();
        return Ok(Lifting::Feasible(Coupling { entries }));
    }

    let reach = net.reachable(source, eps);
    let subset: Vec<usize> = (0..n1).filter(|&i| reach[i]).map(|i| delta.support()[i]).collect();
    let image: BTreeSet<usize> = subset
        .iter()
        .flat_map(|&a| rel.image(a).iter().copied())
        .filter(|&b| right_pos(b).is_some())
        .collect();
    let excess = compensated_sum(subset.iter().map(|&a| delta.prob_of(a)))
        - compensated_sum(image.iter().map(|&b| theta.prob_of(b)));
    Ok(Lifting::Infeasible(CutCertificate {
        subset,
        image: image.into_iter().collect(),
        excess,
        flow,
    }))
}

/// Checks the three coupling conditions within tolerance: both marginals
/// match and all positive mass lies on the relation.
pub fn verify_coupling<T: Scalar>(
    w: &Coupling<T>,
    delta: &FiniteDistribution<T>,
    theta: &FiniteDistribution<T>,
    rel: &StateRelation,
) -> bool {
    let tol = T::tolerance();
    let mut row = std::collections::BTreeMap::<usize, Vec<T>>::new();
    let mut col = std::collections::BTreeMap::<usize, Vec<T>>::new();
    for &((a, b), p) in &w.entries {
        if p < T::zero() {
            return false;
        }
        if p > T::zero() && (a >= rel.left_size() || b >= rel.right_size() || !rel.contains(a, b)) {
            return false;
        }
        row.entry(a).or_default().push(p);
        col.entry(b).or_default().push(p);
    }
    let marginal_ok = |d: &FiniteDistribution<T>, m: &std::collections::BTreeMap<usize, Vec<T>>| {
        let support: BTreeSet<usize> = d.support().iter().copied().chain(m.keys().copied()).collect();
        support.into_iter().all(|s| {
            let got = m
                .get(&s)
                .map(|v| compensated_sum(v.iter().copied()))
                .unwrap_or_else(T::zero);
            (got - d.prob_of(s)).abs() <= tol
        })
    };
    marginal_ok(delta, &row) && marginal_ok(theta, &col)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(pairs: &[(usize, f64)]) -> FiniteDistribution<f64> {
        FiniteDistribution::from_pairs(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn identity_case() {
        let rel = StateRelation::new(1, 1, [(0, 0)]).unwrap();
        let out = check_lifting(&dist(&[(0, 1.0)]), &dist(&[(0, 1.0)]), &rel).unwrap();
        assert_eq!(
            out.coupling().unwrap().entries,
            vec![((0, 0), 1.0)]
        );
    }

    #[test]
    fn absolute_value_relation() {
        // left: 0 ↦ -1, 1 ↦ +1; right: 0 ↦ 0, 1 ↦ 1; related iff |x| = y
        let rel = StateRelation::new(2, 2, [(0, 1), (1, 1)]).unwrap();
        let delta = dist(&[(0, 0.5), (1, 0.5)]);
        let theta = dist(&[(1, 1.0)]);
        let out = check_lifting(&delta, &theta, &rel).unwrap();
        let w = out.coupling().unwrap();
        let mut entries = w.entries.clone();
        entries.sort_by_key(|a| a.0);
        assert_eq!(entries, vec![((0, 1), 0.5), ((1, 1), 0.5)]);
        assert!(verify_coupling(w, &delta, &theta, &rel));
    }

    #[test]
    fn infeasible_with_cut() {
        let rel = StateRelation::new(2, 4, [(0, 2), (1, 3)]).unwrap();
        let delta = dist(&[(0, 0.6), (1, 0.4)]);
        let theta = dist(&[(2, 0.5), (3, 0.5)]);
        match check_lifting(&delta, &theta, &rel).unwrap() {
            Lifting::Infeasible(c) => {
                assert_eq!(c.subset, vec![0]);
                assert!((c.flow - 0.9).abs() < 1e-12);
                assert!((c.excess - 0.1).abs() < 1e-12);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn unknown_ids_are_errors() {
        let rel = StateRelation::new(1, 1, [(0, 0)]).unwrap();
        assert!(check_lifting(&dist(&[(3, 1.0)]), &dist(&[(0, 1.0)]), &rel).is_err());
    }

    #[test]
    fn verify_rejects_bad_couplings() {
        let rel = StateRelation::new(2, 2, [(0, 0), (1, 1)]).unwrap();
        let delta = dist(&[(0, 0.5), (1, 0.5)]);
        let theta = dist(&[(0, 0.5), (1, 0.5)]);
        let good = Coupling {
            entries: vec![((0, 0), 0.5), ((1, 1), 0.5)],
        };
        assert!(verify_coupling(&good, &delta, &theta, &rel));
        let off = Coupling {
            entries: vec![((0, 0), 0.5), ((1, 0), 0.01), ((1, 1), 0.49)],
        };
        assert!(!verify_coupling(&off, &delta, &theta, &rel));
        let short = Coupling {
            entries: vec![((0, 0), 0.49), ((1, 1), 0.5)],
        };
        assert!(!verify_coupling(&short, &delta, &theta, &rel));
    }

    #[test]
    fn works_in_single_precision() {
        let rel = StateRelation::new(2, 1, [(0, 0), (1, 0)]).unwrap();
        let delta = FiniteDistribution::<f32>::new(vec![0, 1], vec![0.25, 0.75]).unwrap();
        let theta = FiniteDistribution::<f32>::dirac(0);
        let out = check_lifting(&delta, &theta, &rel).unwrap();
        assert!(verify_coupling(out.coupling().unwrap(), &delta, &theta, &rel));
    }
}
