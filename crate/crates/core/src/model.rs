//! Finite robust MDPs: distributions, labels, models, Markov policies and
//! adversaries, and relations between two models' state spaces.
//!
//! States, actions and disturbances are dense indices; names live in sidecar
//! vectors and are only used for I/O. An MDP is a [`FiniteRmdp`] with a single
//! disturbance.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::scalar::{compensated_sum, Scalar};

/// A distribution with finite support. Dirac distributions are one-element
/// supports, not a special case.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteDistribution<T> {
    support: Vec<usize>,
    probs: Vec<T>,
}

impl<T: Scalar> FiniteDistribution<T> {
    /// Validated constructor.
    pub fn new(support: Vec<usize>, probs: Vec<T>) -> Result<Self, ModelError> {
        let d = Self::raw(support, probs);
        match d.violations().into_iter().next() {
            None => Ok(d),
            Some(msg) => Err(ModelError::InvalidDistribution(msg)),
        }
    }

    /// Unvalidated constructor; [`validate_model`] reports what is wrong.
    pub fn raw(support: Vec<usize>, probs: Vec<T>) -> Self {
        Self { support, probs }
    }

    pub fn dirac(state: usize) -> Self {
        Self {
            support: vec![state],
            probs: vec![T::one()],
        }
    }

    pub fn uniform(support: Vec<usize>) -> Result<Self, ModelError> {
        if support.is_empty() {
            return Err(ModelError::InvalidDistribution("empty support".into()));
        }
        let p = T::one() / T::lit(support.len() as f64);
        let n = support.len();
        Self::new(support, vec![p; n])
    }

    /// Builds from `(state, p)` pairs, merging duplicates and dropping zeros.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, T)>) -> Result<Self, ModelError> {
        let mut acc: BTreeMap<usize, T> = BTreeMap::new();
        for (s, p) in pairs {
            let e = acc.entry(s).or_insert_with(T::zero);
            *e = *e + p;
        }
        let (support, probs) = acc.into_iter().filter(|(_, p)| *p > T::zero()).unzip();
        Self::new(support, probs)
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.support.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn prob_of(&self, state: usize) -> T {
        self.iter()
            .find(|(s, _)| *s == state)
            .map(|(_, p)| p)
            .unwrap_or_else(T::zero)
    }

    pub fn total(&self) -> T {
        compensated_sum(self.probs.iter().copied())
    }

    pub fn is_dirac(&self) -> bool {
        self.support.len() == 1
    }

    /// Expectation of `f` over the support.
    pub fn expect(&self, f: impl Fn(usize) -> T) -> T {
        compensated_sum(self.iter().map(|(s, p)| p * f(s)))
    }

    /// Inverse-CDF sampling against a uniform draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let r: f64 = rng.random();
        let mut acc = 0.0;
        for (s, p) in self.iter() {
            acc += p.to_f64_lossy();
            if r < acc {
                return s;
            }
        }
        *self.support.last().expect("nonempty support")
    }

    /// Human-readable invariant violations; empty iff valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.support.len() != self.probs.len() {
            out.push(format!(
                "support has {} entries but {} probabilities",
                self.support.len(),
                self.probs.len()
            ));
            return out;
        }
        if self.support.is_empty() {
            out.push("empty distribution".into());
            return out;
        }
        let mut seen = BTreeSet::new();
        for &s in &self.support {
            if !seen.insert(s) {
                out.push(format!("duplicate support entry {s}"));
            }
        }
        for (s, p) in self.iter() {
            if !(p >= T::zero()) || p > T::one() + T::tolerance() {
                out.push(format!("probability {p} of state {s} outside [0,1]"));
            }
        }
        let total = self.total();
        if (total - T::one()).abs() > T::tolerance() {
            out.push(format!("row sums {total} ≠ 1"));
        }
        out
    }
}

/// Bitmask over a model's label alphabet (at most 64 labels).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelSet(pub u64);

impl LabelSet {
    pub const EMPTY: LabelSet = LabelSet(0);

    pub fn single(index: usize) -> Self {
        LabelSet(1u64 << index)
    }

    pub fn contains(self, index: usize) -> bool {
        self.0 & (1u64 << index) != 0
    }

    pub fn insert(&mut self, index: usize) {
        self.0 |= 1u64 << index;
    }

    pub fn indices(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |i| self.contains(*i))
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.indices().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

/// A finite robust MDP. The kernel is a dense table indexed by
/// `(state, action, disturbance)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteRmdp<T> {
    alphabet: Vec<String>,
    state_names: Vec<String>,
    labels: Vec<LabelSet>,
    action_names: Vec<String>,
    disturbance_names: Vec<String>,
    init: FiniteDistribution<T>,
    kernel: Vec<FiniteDistribution<T>>,
}

/// Mutable builder for [`FiniteRmdp`]. Unset kernel entries stay empty and are
/// reported by validation.
#[derive(Clone, Debug)]
pub struct RmdpBuilder<T> {
    model: FiniteRmdp<T>,
}

impl<T: Scalar> RmdpBuilder<T> {
    pub fn new(
        alphabet: Vec<String>,
        states: Vec<(String, LabelSet)>,
        actions: Vec<String>,
        disturbances: Vec<String>,
    ) -> Self {
        let (state_names, labels): (Vec<_>, Vec<_>) = states.into_iter().unzip();
        let n = state_names.len() * actions.len() * disturbances.len();
        Self {
            model: FiniteRmdp {
                alphabet,
                state_names,
                labels,
                action_names: actions,
                disturbance_names: disturbances,
                init: FiniteDistribution::raw(Vec::new(), Vec::new()),
                kernel: vec![FiniteDistribution::raw(Vec::new(), Vec::new()); n],
            },
        }
    }

    /// Anonymous model with `s0..`, `u0..`, `v0..` names.
    pub fn with_sizes(alphabet: Vec<String>, labels: Vec<LabelSet>, n_actions: usize, n_dist: usize) -> Self {
        let states = labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| (format!("s{i}"), l))
            .collect();
        let actions = (0..n_actions).map(|i| format!("u{i}")).collect();
        let dists = (0..n_dist).map(|i| format!("v{i}")).collect();
        Self::new(alphabet, states, actions, dists)
    }

    pub fn init(mut self, init: FiniteDistribution<T>) -> Self {
        self.model.init = init;
        self
    }

    pub fn set_init(&mut self, init: FiniteDistribution<T>) {
        self.model.init = init;
    }

    pub fn set_kernel(&mut self, x: usize, u: usize, v: usize, d: FiniteDistribution<T>) {
        let i = self.model.index(x, u, v);
        self.model.kernel[i] = d;
    }

    pub fn set_label(&mut self, x: usize, l: LabelSet) {
        self.model.labels[x] = l;
    }

    pub fn build(self) -> Result<FiniteRmdp<T>, ModelError> {
        let report = validate_model(&self.model);
        if report.is_valid() {
            Ok(self.model)
        } else {
            Err(ModelError::Invalid(report))
        }
    }

    pub fn build_unchecked(self) -> FiniteRmdp<T> {
        self.model
    }
}

impl<T: Scalar> FiniteRmdp<T> {
    #[inline]
    fn index(&self, x: usize, u: usize, v: usize) -> usize {
        (x * self.action_names.len() + u) * self.disturbance_names.len() + v
    }

    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn n_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn n_disturbances(&self) -> usize {
        self.disturbance_names.len()
    }

    pub fn is_mdp(&self) -> bool {
        self.disturbance_names.len() == 1
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn disturbance_names(&self) -> &[String] {
        &self.disturbance_names
    }

    pub fn init(&self) -> &FiniteDistribution<T> {
        &self.init
    }

    pub fn label(&self, x: usize) -> LabelSet {
        self.labels[x]
    }

    pub fn labels(&self) -> &[LabelSet] {
        &self.labels
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.alphabet.iter().position(|l| l == name)
    }

    /// Kernel row; panics on out-of-range ids (use [`Self::try_kernel`] for untrusted ids).
    #[inline]
    pub fn kernel(&self, x: usize, u: usize, v: usize) -> &FiniteDistribution<T> {
        &self.kernel[self.index(x, u, v)]
    }

    pub fn try_kernel(&self, x: usize, u: usize, v: usize) -> Result<&FiniteDistribution<T>, ModelError> {
        if x >= self.n_states() {
            return Err(ModelError::UnknownId { kind: "state", id: x });
        }
        if u >= self.n_actions() {
            return Err(ModelError::UnknownId { kind: "action", id: u });
        }
        if v >= self.n_disturbances() {
            return Err(ModelError::UnknownId { kind: "disturbance", id: v });
        }
        Ok(self.kernel(x, u, v))
    }

    /// Returns a copy with one state's labels replaced.
    pub fn with_label(&self, x: usize, l: LabelSet) -> Self {
        let mut m = self.clone();
        m.labels[x] = l;
        m
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.state_names.iter().position(|s| s == name)
    }
}

/// Outcome of [`validate_model`]; empty iff the model is valid.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.issues.join("; "))
    }
}

/// Lists every violated model invariant.
pub fn validate_model<T: Scalar>(m: &FiniteRmdp<T>) -> ValidationReport {
    let mut issues = Vec::new();
    let n = m.n_states();
    if n == 0 {
        issues.push("model has no states".into());
    }
    if m.n_actions() == 0 {
        issues.push("model has no actions".into());
    }
    if m.n_disturbances() == 0 {
        issues.push("model has no disturbances".into());
    }
    if m.alphabet.len() > 64 {
        issues.push(format!("alphabet has {} labels, at most 64 supported", m.alphabet.len()));
    }
    let label_mask = if m.alphabet.len() >= 64 {
        u64::MAX
    } else {
        (1u64 << m.alphabet.len()) - 1
    };
    for (x, l) in m.labels.iter().enumerate() {
        if l.0 & !label_mask != 0 {
            issues.push(format!("state {} carries labels outside the alphabet", m.state_names[x]));
        }
    }
    for msg in m.init.violations() {
        issues.push(format!("initial distribution: {msg}"));
    }
    if m.init.support.iter().any(|&s| s >= n) {
        issues.push("initial distribution references unknown state".into());
    }
    for x in 0..n {
        for u in 0..m.n_actions() {
            for v in 0..m.n_disturbances() {
                let d = m.kernel(x, u, v);
                let at = format!(
                    "kernel({}, {}, {})",
                    m.state_names[x], m.action_names[u], m.disturbance_names[v]
                );
                if d.is_empty() && d.probs.is_empty() {
                    issues.push(format!("{at}: missing kernel entry"));
                    continue;
                }
                for msg in d.violations() {
                    issues.push(format!("{at}: {msg}"));
                }
                if d.support.iter().any(|&s| s >= n) {
                    issues.push(format!("{at}: successor out of range"));
                }
            }
        }
    }
    ValidationReport { issues }
}

/// Pushforward of `kernel(x, u, v)` through the labeling.
pub fn one_step_label_distribution<T: Scalar>(
    m: &FiniteRmdp<T>,
    x: usize,
    u: usize,
    v: usize,
) -> Result<BTreeMap<LabelSet, T>, ModelError> {
    let d = m.try_kernel(x, u, v)?;
    let mut out: BTreeMap<LabelSet, T> = BTreeMap::new();
    for (s, p) in d.iter() {
        let e = out.entry(m.label(s)).or_insert_with(T::zero);
        *e = *e + p;
    }
    Ok(out)
}

/// A Markov decision rule sequence over some choice set (actions for
/// policies, disturbances for adversaries).
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovRule<T> {
    stationary: bool,
    steps: Vec<Vec<FiniteDistribution<T>>>,
}

/// Markov policy: per step, state → distribution over actions.
pub type MarkovPolicy<T> = MarkovRule<T>;
/// Markov adversary: per step, state → distribution over disturbances.
pub type MarkovAdversary<T> = MarkovRule<T>;

impl<T: Scalar> MarkovRule<T> {
    pub fn stationary(rows: Vec<FiniteDistribution<T>>) -> Self {
        Self {
            stationary: true,
            steps: vec![rows],
        }
    }

    pub fn time_varying(steps: Vec<Vec<FiniteDistribution<T>>>) -> Self {
        Self {
            stationary: false,
            steps,
        }
    }

    /// Stationary deterministic rule from a choice per state.
    pub fn deterministic(choices: &[usize]) -> Self {
        Self::stationary(choices.iter().map(|&c| FiniteDistribution::dirac(c)).collect())
    }

    /// Stationary rule choosing uniformly among `n_choices` everywhere.
    pub fn uniform(n_states: usize, n_choices: usize) -> Self {
        let row = FiniteDistribution::uniform((0..n_choices).collect()).expect("n_choices > 0");
        Self::stationary(vec![row; n_states])
    }

    pub fn is_stationary(&self) -> bool {
        self.stationary
    }

    /// Number of explicit steps; `None` for stationary rules.
    pub fn horizon(&self) -> Option<usize> {
        (!self.stationary).then_some(self.steps.len())
    }

    pub fn covers(&self, horizon: usize) -> bool {
        self.stationary || self.steps.len() >= horizon
    }

    pub fn at(&self, k: usize, x: usize) -> &FiniteDistribution<T> {
        if self.stationary {
            &self.steps[0][x]
        } else {
            &self.steps[k][x]
        }
    }

    pub fn steps(&self) -> &[Vec<FiniteDistribution<T>>] {
        &self.steps
    }

    /// Checks every row is a distribution over `0..n_choices` and that each
    /// step covers `n_states`.
    pub fn check(&self, n_states: usize, n_choices: usize) -> Result<(), ModelError> {
        for (k, step) in self.steps.iter().enumerate() {
            if step.len() != n_states {
                return Err(ModelError::Shape(format!(
                    "step {k} has {} rows, expected {n_states}",
                    step.len()
                )));
            }
            for (x, row) in step.iter().enumerate() {
                if let Some(msg) = row.violations().into_iter().next() {
                    return Err(ModelError::InvalidDistribution(format!("step {k}, state {x}: {msg}")));
                }
                if row.support().iter().any(|&c| c >= n_choices) {
                    return Err(ModelError::Shape(format!("step {k}, state {x}: choice out of range")));
                }
            }
        }
        Ok(())
    }
}

/// Samples a path of `horizon + 1` states under a policy and an adversary.
pub fn simulate_finite<T: Scalar>(
    m: &FiniteRmdp<T>,
    mu: &MarkovPolicy<T>,
    tau: &MarkovAdversary<T>,
    horizon: usize,
    seed: u64,
) -> Result<Vec<usize>, ModelError> {
    if !mu.covers(horizon) || !tau.covers(horizon) {
        return Err(ModelError::HorizonMismatch { requested: horizon });
    }
    mu.check(m.n_states(), m.n_actions())?;
    tau.check(m.n_states(), m.n_disturbances())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = m.init().sample(&mut rng);
    let mut path = Vec::with_capacity(horizon + 1);
    path.push(x);
    for k in 0..horizon {
        let u = mu.at(k, x).sample(&mut rng);
        let v = tau.at(k, x).sample(&mut rng);
        x = m.kernel(x, u, v).sample(&mut rng);
        path.push(x);
    }
    Ok(path)
}

/// Binary relation between the states of two models.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateRelation {
    n1: usize,
    n2: usize,
    pairs: BTreeSet<(usize, usize)>,
    forward: Vec<Vec<usize>>,
    backward: Vec<Vec<usize>>,
}

impl StateRelation {
    pub fn new(n1: usize, n2: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, ModelError> {
        let pairs: BTreeSet<_> = pairs.into_iter().collect();
        let mut forward = vec![Vec::new(); n1];
        let mut backward = vec![Vec::new(); n2];
        for &(a, b) in &pairs {
            if a >= n1 {
                return Err(ModelError::UnknownId { kind: "left state", id: a });
            }
            if b >= n2 {
                return Err(ModelError::UnknownId { kind: "right state", id: b });
            }
            forward[a].push(b);
            backward[b].push(a);
        }
        Ok(Self {
            n1,
            n2,
            pairs,
            forward,
            backward,
        })
    }

    /// Relation induced by a total map `X1 → X2`.
    pub fn from_map(map: &[usize], n2: usize) -> Result<Self, ModelError> {
        Self::new(map.len(), n2, map.iter().copied().enumerate())
    }

    pub fn identity(n: usize) -> Self {
        Self::new(n, n, (0..n).map(|i| (i, i))).expect("in range")
    }

    pub fn left_size(&self) -> usize {
        self.n1
    }

    pub fn right_size(&self) -> usize {
        self.n2
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.pairs.contains(&(a, b))
    }

    /// `R(x1)`.
    pub fn image(&self, a: usize) -> &[usize] {
        &self.forward[a]
    }

    /// `R⁻¹(x2)`.
    pub fn preimage(&self, b: usize) -> &[usize] {
        &self.backward[b]
    }

    /// `|R(x1)| = 1` for every left state.
    pub fn is_single_valued(&self) -> bool {
        self.forward.iter().all(|img| img.len() == 1)
    }

    /// The unique related state, if the relation is single-valued at `a`.
    pub fn single(&self, a: usize) -> Option<usize> {
        match self.forward[a].as_slice() {
            [b] => Some(*b),
            _ => None,
        }
    }

    pub fn inverse(&self) -> Self {
        Self::new(self.n2, self.n1, self.pairs.iter().map(|&(a, b)| (b, a))).expect("in range")
    }

    /// `{(a, c) : ∃b. (a, b) ∈ self ∧ (b, c) ∈ other}`.
    pub fn compose(&self, other: &StateRelation) -> Result<Self, ModelError> {
        if self.n2 != other.n1 {
            return Err(ModelError::Shape("relations are not composable".into()));
        }
        let mut pairs = Vec::new();
        for &(a, b) in &self.pairs {
            for &c in other.image(b) {
                pairs.push((a, c));
            }
        }
        Self::new(self.n1, other.n2, pairs)
    }
}

// ---------------------------------------------------------------------------
// JSON model format

#[derive(Serialize, Deserialize)]
struct StateJson {
    name: String,
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
struct KernelJson<T> {
    x: String,
    u: String,
    v: String,
    successors: Vec<(String, T)>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
struct ModelJson<T> {
    alphabet: Vec<String>,
    states: Vec<StateJson>,
    actions: Vec<String>,
    disturbances: Vec<String>,
    init: Vec<(String, T)>,
    kernel: Vec<KernelJson<T>>,
}

fn lookup(names: &HashMap<&str, usize>, kind: &'static str, name: &str) -> Result<usize, ModelError> {
    names
        .get(name)
        .copied()
        .ok_or_else(|| ModelError::UnknownName { kind, name: name.to_string() })
}

fn name_index(names: &[String]) -> HashMap<&str, usize> {
    names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect()
}

impl<T: Scalar> FiniteRmdp<T> {
    /// Serializes to the JSON model format. Probabilities are written as the
    /// shortest decimal that round-trips the binary value.
    pub fn to_json(&self) -> String {
        let dist = |d: &FiniteDistribution<T>| {
            d.iter()
                .map(|(s, p)| (self.state_names[s].clone(), p))
                .collect::<Vec<_>>()
        };
        let mut kernel = Vec::with_capacity(self.kernel.len());
        for x in 0..self.n_states() {
            for u in 0..self.n_actions() {
                for v in 0..self.n_disturbances() {
                    kernel.push(KernelJson {
                        x: self.state_names[x].clone(),
                        u: self.action_names[u].clone(),
                        v: self.disturbance_names[v].clone(),
                        successors: dist(self.kernel(x, u, v)),
                    });
                }
            }
        }
        let doc = ModelJson {
            alphabet: self.alphabet.clone(),
            states: self
                .state_names
                .iter()
                .zip(&self.labels)
                .map(|(name, l)| StateJson {
                    name: name.clone(),
                    labels: l.indices().map(|i| self.alphabet[i].clone()).collect(),
                })
                .collect(),
            actions: self.action_names.clone(),
            disturbances: self.disturbance_names.clone(),
            init: dist(&self.init),
            kernel,
        };
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }

    /// Parses the JSON model format and validates the result.
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: ModelJson<T> = serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        let labels_ix = name_index(&doc.alphabet);
        let mut states = Vec::with_capacity(doc.states.len());
        for s in &doc.states {
            let mut l = LabelSet::EMPTY;
            for name in &s.labels {
                l.insert(lookup(&labels_ix, "label", name)?);
            }
            states.push((s.name.clone(), l));
        }
        let mut b = RmdpBuilder::new(doc.alphabet.clone(), states, doc.actions.clone(), doc.disturbances.clone());
        let state_names: Vec<String> = doc.states.iter().map(|s| s.name.clone()).collect();
        let sx = name_index(&state_names);
        let ux = name_index(&doc.actions);
        let vx = name_index(&doc.disturbances);
        if sx.len() != state_names.len() || ux.len() != doc.actions.len() || vx.len() != doc.disturbances.len() {
            return Err(ModelError::Parse("duplicate state, action or disturbance name".into()));
        }
        let to_dist = |pairs: &[(String, T)]| -> Result<FiniteDistribution<T>, ModelError> {
            let mut support = Vec::with_capacity(pairs.len());
            let mut probs = Vec::with_capacity(pairs.len());
            for (name, p) in pairs {
                support.push(lookup(&sx, "state", name)?);
                probs.push(*p);
            }
            Ok(FiniteDistribution::raw(support, probs))
        };
        b.set_init(to_dist(&doc.init)?);
        for k in &doc.kernel {
            let x = lookup(&sx, "state", &k.x)?;
            let u = lookup(&ux, "action", &k.u)?;
            let v = lookup(&vx, "disturbance", &k.v)?;
            b.set_kernel(x, u, v, to_dist(&k.successors)?);
        }
        b.build()
    }
}

impl StateRelation {
    /// Parses a JSON list of `[left_name, right_name]` pairs against two models.
    pub fn from_json<T: Scalar>(text: &str, m1: &FiniteRmdp<T>, m2: &FiniteRmdp<T>) -> Result<Self, ModelError> {
        let pairs: Vec<(String, String)> = serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        let l = name_index(m1.state_names());
        let r = name_index(m2.state_names());
        let mut ids = Vec::with_capacity(pairs.len());
        for (a, b) in &pairs {
            ids.push((lookup(&l, "left state", a)?, lookup(&r, "right state", b)?));
        }
        Self::new(m1.n_states(), m2.n_states(), ids)
    }

    pub fn to_json<T: Scalar>(&self, m1: &FiniteRmdp<T>, m2: &FiniteRmdp<T>) -> String {
        let pairs: Vec<(&str, &str)> = self
            .pairs()
            .map(|(a, b)| (m1.state_names()[a].as_str(), m2.state_names()[b].as_str()))
            .collect();
        serde_json::to_string_pretty(&pairs).expect("relation serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alphabet() -> Vec<String> {
        vec!["G".into()]
    }

    fn self_loop(p: f64) -> FiniteRmdp<f64> {
        let mut b = RmdpBuilder::with_sizes(alphabet(), vec![LabelSet::EMPTY], 1, 1).init(FiniteDistribution::dirac(0));
        b.set_kernel(0, 0, 0, FiniteDistribution::raw(vec![0], vec![p]));
        b.build_unchecked()
    }

    #[test]
    fn identity_model_is_valid() {
        assert!(validate_model(&self_loop(1.0)).is_valid());
    }

    #[test]
    fn unnormalized_row_is_reported() {
        let r = validate_model(&self_loop(0.9));
        assert_eq!(r.issues.len(), 1);
        assert!(r.issues[0].contains("row sums 0.9 ≠ 1"), "{r}");
    }

    #[test]
    fn missing_kernel_entry_is_reported() {
        let b: RmdpBuilder<f64> =
            RmdpBuilder::with_sizes(alphabet(), vec![LabelSet::EMPTY; 2], 1, 2).init(FiniteDistribution::dirac(0));
        let r = validate_model(&b.build_unchecked());
        assert_eq!(r.issues.iter().filter(|i| i.contains("missing")).count(), 4);
    }

    #[test]
    fn label_pushforward() {
        let g = LabelSet::single(0);
        let mut b = RmdpBuilder::with_sizes(alphabet(), vec![LabelSet::EMPTY, g, LabelSet::EMPTY], 2, 1)
            .init(FiniteDistribution::dirac(0));
        for x in 0..3 {
            b.set_kernel(x, 0, 0, FiniteDistribution::dirac(1));
            b.set_kernel(x, 1, 0, FiniteDistribution::new(vec![1, 2], vec![0.5, 0.5]).unwrap());
        }
        let m = b.build().unwrap();
        let d = one_step_label_distribution(&m, 0, 0, 0).unwrap();
        assert_eq!(d, BTreeMap::from([(g, 1.0)]));
        let d = one_step_label_distribution(&m, 0, 1, 0).unwrap();
        assert_eq!(d, BTreeMap::from([(g, 0.5), (LabelSet::EMPTY, 0.5)]));
        assert!(one_step_label_distribution(&m, 3, 0, 0).is_err());
    }

    #[test]
    fn deterministic_chain_path_ignores_seed() {
        let mut b = RmdpBuilder::<f64>::with_sizes(alphabet(), vec![LabelSet::EMPTY; 3], 1, 1).init(FiniteDistribution::dirac(0));
        for x in 0..3 {
            b.set_kernel(x, 0, 0, FiniteDistribution::dirac((x + 1) % 3));
        }
        let m = b.build().unwrap();
        let mu = MarkovPolicy::deterministic(&[0, 0, 0]);
        let tau = MarkovAdversary::deterministic(&[0, 0, 0]);
        let a = simulate_finite(&m, &mu, &tau, 5, 1).unwrap();
        let b = simulate_finite(&m, &mu, &tau, 5, 99).unwrap();
        assert_eq!(a, vec![0, 1, 2, 0, 1, 2]);
        assert_eq!(a, b);
    }

    #[test]
    fn horizon_mismatch_is_an_error() {
        let m = self_loop(1.0);
        let mu = MarkovPolicy::time_varying(vec![vec![FiniteDistribution::dirac(0)]; 2]);
        let tau = MarkovAdversary::deterministic(&[0]);
        assert!(matches!(
            simulate_finite(&m, &mu, &tau, 3, 0),
            Err(ModelError::HorizonMismatch { requested: 3 })
        ));
        assert!(simulate_finite(&m, &mu, &tau, 2, 0).is_ok());
    }

    #[test]
    fn coin_flip_frequency() {
        let mut b = RmdpBuilder::with_sizes(alphabet(), vec![LabelSet::EMPTY; 2], 1, 1).init(FiniteDistribution::dirac(0));
        for x in 0..2 {
            b.set_kernel(x, 0, 0, FiniteDistribution::new(vec![0, 1], vec![0.5, 0.5]).unwrap());
        }
        let m = b.build().unwrap();
        let mu = MarkovPolicy::deterministic(&[0, 0]);
        let tau = MarkovAdversary::deterministic(&[0, 0]);
        let n = 100_000;
        let path = simulate_finite(&m, &mu, &tau, n, 7).unwrap();
        let ones = path[1..].iter().filter(|&&s| s == 1).count();
        assert!((ones as f64 / n as f64 - 0.5).abs() < 0.01);
        assert_eq!(path, simulate_finite(&m, &mu, &tau, n, 7).unwrap());
    }

    #[test]
    fn relation_single_valued_and_compose() {
        let r = StateRelation::from_map(&[0, 0, 1], 2).unwrap();
        assert!(r.is_single_valued());
        assert_eq!(r.preimage(0), &[0, 1]);
        assert!(!r.inverse().is_single_valued());
        let s = StateRelation::from_map(&[1, 0], 2).unwrap();
        let c = r.compose(&s).unwrap();
        assert_eq!(c.pairs().collect::<Vec<_>>(), vec![(0, 1), (1, 1), (2, 0)]);
        assert!(StateRelation::new(1, 1, [(0, 1)]).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut b = RmdpBuilder::with_sizes(alphabet(), vec![LabelSet::single(0), LabelSet::EMPTY], 1, 2)
            .init(FiniteDistribution::dirac(1));
        let p = 0.1 + 0.2; // not a short decimal
        for x in 0..2 {
            for v in 0..2 {
                b.set_kernel(x, 0, v, FiniteDistribution::new(vec![0, 1], vec![p, 1.0 - p]).unwrap());
            }
        }
        let m = b.build().unwrap();
        let text = m.to_json();
        let back = FiniteRmdp::<f64>::from_json(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json(), text);
    }
}
