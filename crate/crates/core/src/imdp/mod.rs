//! Interval MDPs: each `(state, action)` row bounds every successor
//! probability by `[lo, hi]`, and any distribution inside the box is possible.
//!
//! Storage is compressed sparse rows: states own contiguous row ranges, rows
//! own contiguous successor ranges.

mod explicit;
mod solver;

pub use explicit::{export_explicit, import_explicit, read_explicit, write_explicit};
pub use solver::{
    evaluate_fixed_policy, robust_expectation_lower, robust_value_iteration, ImdpPolicy, SolveResult,
    CONVERGENCE_THRESHOLD,
};

use crate::error::ImdpError;
use crate::model::LabelSet;
use crate::scalar::{compensated_sum, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalMdp<T> {
    alphabet: Vec<String>,
    labels: Vec<LabelSet>,
    initial: usize,
    sink: Option<usize>,
    state_rows: Vec<usize>,
    row_action: Vec<u32>,
    row_ptr: Vec<usize>,
    succ: Vec<u32>,
    lo: Vec<T>,
    hi: Vec<T>,
}

/// Borrowed view of one interval row.
#[derive(Clone, Copy, Debug)]
pub struct Row<'a, T> {
    pub action: u32,
    pub succ: &'a [u32],
    pub lo: &'a [T],
    pub hi: &'a [T],
}

impl<T: Scalar> Row<'_, T> {
    pub fn len(&self) -> usize {
        self.succ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succ.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, T, T)> + '_ {
        (0..self.succ.len()).map(move |i| (self.succ[i], self.lo[i], self.hi[i]))
    }

    /// `Σ lo ≤ 1 ≤ Σ hi` within tolerance.
    pub fn is_feasible(&self) -> bool {
        let tol = T::tolerance();
        compensated_sum(self.lo.iter().copied()) <= T::one() + tol
            && compensated_sum(self.hi.iter().copied()) >= T::one() - tol
    }
}

impl<T: Scalar> IntervalMdp<T> {
    pub fn n_states(&self) -> usize {
        self.labels.len()
    }

    pub fn n_rows(&self) -> usize {
        self.row_action.len()
    }

    pub fn n_transitions(&self) -> usize {
        self.succ.len()
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn label(&self, s: usize) -> LabelSet {
        self.labels[s]
    }

    pub fn labels(&self) -> &[LabelSet] {
        &self.labels
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.alphabet.iter().position(|l| l == name)
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn sink(&self) -> Option<usize> {
        self.sink
    }

    fn row_at(&self, r: usize) -> Row<'_, T> {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        Row {
            action: self.row_action[r],
            succ: &self.succ[range.clone()],
            lo: &self.lo[range.clone()],
            hi: &self.hi[range],
        }
    }

    /// Rows of state `s` in increasing action order.
    pub fn rows(&self, s: usize) -> impl Iterator<Item = Row<'_, T>> + '_ {
        (self.state_rows[s]..self.state_rows[s + 1]).map(move |r| self.row_at(r))
    }

    pub fn row(&self, s: usize, action: u32) -> Option<Row<'_, T>> {
        let range = self.state_rows[s]..self.state_rows[s + 1];
        let slice = &self.row_action[range.clone()];
        slice.binary_search(&action).ok().map(|i| self.row_at(range.start + i))
    }

    pub fn actions(&self, s: usize) -> &[u32] {
        &self.row_action[self.state_rows[s]..self.state_rows[s + 1]]
    }

    /// Every invariant violation, or `Ok` for a valid model.
    pub fn validate(&self) -> Result<(), ImdpError> {
        let n = self.n_states();
        let bad = |msg: String| Err(ImdpError::Invalid(msg));
        if n == 0 {
            return bad("no states".into());
        }
        if self.initial >= n {
            return bad(format!("initial state {} out of range", self.initial));
        }
        for s in 0..n {
            let actions = self.actions(s);
            if actions.is_empty() {
                return bad(format!("state {s} has no actions"));
            }
            if actions.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("state {s} has duplicate or unordered actions"));
            }
            for row in self.rows(s) {
                let at = format!("row (state {s}, action {})", row.action);
                if row.is_empty() {
                    return bad(format!("{at} is empty"));
                }
                let mut seen = std::collections::HashSet::new();
                for (t, lo, hi) in row.entries() {
                    if t as usize >= n {
                        return bad(format!("{at}: successor {t} out of range"));
                    }
                    if !seen.insert(t) {
                        return bad(format!("{at}: duplicate successor {t}"));
                    }
                    if !(lo >= T::zero() && lo <= hi && hi <= T::one()) {
                        return bad(format!("{at}: interval [{lo}, {hi}] for successor {t} violates 0 ≤ lo ≤ hi ≤ 1"));
                    }
                }
                if !row.is_feasible() {
                    return Err(ImdpError::InfeasibleRow(format!(
                        "{at}: Σlo = {}, Σhi = {}",
                        compensated_sum(row.lo.iter().copied()),
                        compensated_sum(row.hi.iter().copied())
                    )));
                }
                if Some(s) == self.sink {
                    let (t, lo, hi) = row.entries().next().expect("nonempty");
                    if row.len() != 1 || t as usize != s || lo != T::one() || hi != T::one() {
                        return bad(format!("{at}: sink must be a [1,1] self-loop"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Copy with every interval replaced by `f(state, action, successor, lo, hi)`.
    pub fn map_intervals(&self, mut f: impl FnMut(usize, u32, u32, T, T) -> (T, T)) -> Self {
        let mut out = self.clone();
        for s in 0..self.n_states() {
            for r in self.state_rows[s]..self.state_rows[s + 1] {
                for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                    let (lo, hi) = f(s, self.row_action[r], self.succ[i], self.lo[i], self.hi[i]);
                    out.lo[i] = lo;
                    out.hi[i] = hi;
                }
            }
        }
        out
    }
}

/// Incremental construction; rows must arrive in increasing `(state, action)` order.
#[derive(Clone, Debug)]
pub struct ImdpBuilder<T> {
    model: IntervalMdp<T>,
    current_state: usize,
}

impl<T: Scalar> ImdpBuilder<T> {
    pub fn new(n_states: usize, alphabet: Vec<String>) -> Self {
        Self {
            model: IntervalMdp {
                alphabet,
                labels: vec![LabelSet::EMPTY; n_states],
                initial: 0,
                sink: None,
                state_rows: vec![0],
                row_action: Vec::new(),
                row_ptr: vec![0],
                succ: Vec::new(),
                lo: Vec::new(),
                hi: Vec::new(),
            },
            current_state: 0,
        }
    }

    pub fn with_capacity(mut self, rows: usize, transitions: usize) -> Self {
        self.model.row_action.reserve(rows);
        self.model.row_ptr.reserve(rows);
        self.model.succ.reserve(transitions);
        self.model.lo.reserve(transitions);
        self.model.hi.reserve(transitions);
        self
    }

    pub fn set_label(&mut self, s: usize, l: LabelSet) {
        self.model.labels[s] = l;
    }

    pub fn set_initial(&mut self, s: usize) {
        self.model.initial = s;
    }

    pub fn set_sink(&mut self, s: usize) {
        self.model.sink = Some(s);
    }

    fn close_states_until(&mut self, s: usize) {
        while self.current_state < s {
            self.model.state_rows.push(self.model.row_action.len());
            self.current_state += 1;
        }
    }

    pub fn push_row(&mut self, state: usize, action: u32, entries: impl IntoIterator<Item = (u32, T, T)>) -> Result<(), ImdpError> {
        if state >= self.model.labels.len() {
            return Err(ImdpError::Invalid(format!("state {state} out of range")));
        }
        if state < self.current_state {
            return Err(ImdpError::Invalid(format!("row for state {state} after state {}", self.current_state)));
        }
        self.close_states_until(state);
        let start = self.model.state_rows[state];
        if self.model.row_action.len() > start && *self.model.row_action.last().unwrap() >= action {
            return Err(ImdpError::Invalid(format!(
                "row (state {state}, action {action}) duplicated or out of order"
            )));
        }
        self.model.row_action.push(action);
        for (t, lo, hi) in entries {
            self.model.succ.push(t);
            self.model.lo.push(lo);
            self.model.hi.push(hi);
        }
        self.model.row_ptr.push(self.model.succ.len());
        Ok(())
    }

    pub fn build(self) -> Result<IntervalMdp<T>, ImdpError> {
        let m = self.build_unchecked();
        m.validate()?;
        Ok(m)
    }

    pub fn build_unchecked(mut self) -> IntervalMdp<T> {
        let n = self.model.labels.len();
        self.close_states_until(n);
        self.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn chain(p: f64) -> IntervalMdp<f64> {
        // 0 → 1 → 2(goal) with probability p, else to the sink 3
        let mut b = ImdpBuilder::new(4, vec!["goal".into(), "unsafe".into()]);
        b.set_label(2, LabelSet::single(0));
        b.set_label(3, LabelSet::single(1));
        b.set_sink(3);
        b.push_row(0, 0, [(1, p, p), (3, 1.0 - p, 1.0 - p)]).unwrap();
        b.push_row(1, 0, [(2, p, p), (3, 1.0 - p, 1.0 - p)]).unwrap();
        b.push_row(2, 0, [(2, 1.0, 1.0)]).unwrap();
        b.push_row(3, 0, [(3, 1.0, 1.0)]).unwrap();
        b.build().unwrap()
    }

    #[test]
    fn builder_and_lookup() {
        let m = chain(0.9);
        assert_eq!(m.n_states(), 4);
        assert_eq!(m.n_rows(), 4);
        assert_eq!(m.n_transitions(), 6);
        assert_eq!(m.row(1, 0).unwrap().succ, &[2, 3]);
        assert!(m.row(1, 1).is_none());
    }

    #[test]
    fn invalid_models_are_rejected() {
        let mut b = ImdpBuilder::<f64>::new(2, vec![]);
        b.push_row(0, 0, [(1, 0.6, 0.5)]).unwrap();
        b.push_row(1, 0, [(1, 1.0, 1.0)]).unwrap();
        assert!(b.build().is_err());

        let mut b = ImdpBuilder::<f64>::new(2, vec![]);
        b.push_row(0, 0, [(0, 0.1, 0.4), (1, 0.1, 0.4)]).unwrap();
        b.push_row(1, 0, [(1, 1.0, 1.0)]).unwrap();
        assert!(matches!(b.build(), Err(ImdpError::InfeasibleRow(_))));

        let mut b = ImdpBuilder::<f64>::new(2, vec![]);
        b.push_row(1, 0, [(1, 1.0, 1.0)]).unwrap();
        assert!(b.push_row(0, 0, [(0, 1.0, 1.0)]).is_err());

        let mut b = ImdpBuilder::<f64>::new(2, vec![]);
        b.set_sink(1);
        b.push_row(0, 0, [(1, 1.0, 1.0)]).unwrap();
        b.push_row(1, 0, [(0, 1.0, 1.0)]).unwrap();
        assert!(b.build().is_err());
    }
}
