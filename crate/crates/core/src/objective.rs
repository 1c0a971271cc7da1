use serde::{Deserialize, Serialize};

/// Number of steps a reach-avoid objective looks ahead.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Finite(usize),
    /// Iterate to the convergence threshold.
    Unbounded,
}

/// Reach a `goal`-labeled state without visiting an `unsafe`-labeled state
/// before (or at) that moment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReachAvoidSpec {
    pub goal: String,
    #[serde(rename = "unsafe")]
    pub unsafe_label: String,
    pub horizon: Horizon,
}

impl ReachAvoidSpec {
    pub fn new(goal: impl Into<String>, unsafe_label: impl Into<String>, horizon: Horizon) -> Self {
        Self {
            goal: goal.into(),
            unsafe_label: unsafe_label.into(),
            horizon,
        }
    }

    pub fn unbounded(goal: impl Into<String>, unsafe_label: impl Into<String>) -> Self {
        Self::new(goal, unsafe_label, Horizon::Unbounded)
    }
}

/// Per-state classification used by both solvers: unsafe wins over goal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Pin {
    Free,
    Goal,
    Unsafe,
}

pub(crate) fn pin_of(labels: crate::model::LabelSet, goal: usize, unsafe_ix: usize) -> Pin {
    if labels.contains(unsafe_ix) {
        Pin::Unsafe
    } else if labels.contains(goal) {
        Pin::Goal
    } else {
        Pin::Free
    }
}
