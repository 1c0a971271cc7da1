//! Interval-MDP abstraction of a [`ParametricSystem`] over a rectangular grid.
//!
//! Every grid cell becomes an abstract state, plus one absorbing sink for
//! leaving the domain (labeled unsafe). Each abstract action is one concrete
//! input vector. A row bounds, for every concrete state in the source cell and
//! every parameter in the box, the probability of landing in each target cell:
//! deterministic dimensions contribute a membership factor (`[1,1]` inside,
//! `[0,1]` straddling), noisy dimensions the min/max Gaussian mass over the
//! reach interval of the mean.
//!
//! Noisy targets farther than `prune_sigmas` standard deviations from the mean
//! interval are dropped and their mass is routed to the sink. Sending mass to
//! the absorbing unsafe sink can only lower reach-avoid probabilities, so the
//! values computed on the abstraction remain lower bounds.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::ParametricSystem;
use crate::error::AbstractionError;
use crate::imdp::{ImdpBuilder, IntervalMdp};
use crate::model::LabelSet;
use crate::Interval;

pub const GOAL: &str = "goal";
pub const UNSAFE: &str = "unsafe";

/// Absolute slack added to Gaussian mass bounds to cover CDF rounding.
const MASS_SLACK: f64 = 1e-12;
/// Beyond this many standard deviations the Gaussian mass underflows.
const EXACT_SIGMAS: f64 = 40.0;

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Upper tail `P(Z > z)`.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// `P(l ≤ m + sd·Z ≤ u)`, evaluated on the side of the mean where the CDF
/// difference does not cancel.
pub fn gaussian_mass(target: Interval, mean: f64, sd: f64) -> f64 {
    let a = (target.lo - mean) / sd;
    let b = (target.hi - mean) / sd;
    let p = if a >= 0.0 {
        normal_sf(a) - normal_sf(b)
    } else if b <= 0.0 {
        normal_cdf(b) - normal_cdf(a)
    } else {
        1.0 - normal_cdf(a) - normal_sf(b)
    };
    p.clamp(0.0, 1.0)
}

/// Range of [`gaussian_mass`] over means in `mean`. The mass is unimodal in
/// the mean, so the maximum sits at the clamped target center and the minimum
/// at an endpoint.
pub fn gaussian_mass_bounds(target: Interval, mean: Interval, sd: f64) -> Result<Interval, AbstractionError> {
    if !(target.lo <= target.hi) || !(mean.lo <= mean.hi) || !mean.lo.is_finite() || !mean.hi.is_finite() {
        return Err(AbstractionError::InvalidInterval(format!(
            "target [{}, {}], mean [{}, {}]",
            target.lo, target.hi, mean.lo, mean.hi
        )));
    }
    if !(sd > 0.0) {
        return Err(AbstractionError::InvalidInterval(format!("standard deviation {sd}")));
    }
    let f = |m: f64| gaussian_mass(target, m, sd);
    let (at_lo, at_hi) = (f(mean.lo), f(mean.hi));
    let center = target.lo + (target.hi - target.lo) / 2.0;
    let peak = if center.is_finite() { f(center.clamp(mean.lo, mean.hi)) } else { 0.0 };
    Ok(Interval::new(at_lo.min(at_hi), peak.max(at_lo).max(at_hi)))
}

/// Rectangular partition of a box. Cells are half-open `[lo, hi)` except the
/// last one in each non-periodic dimension, which is closed. Cell ids are
/// row-major with the last dimension fastest; the sink id is `n_cells()`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPartition {
    pub domain: Vec<Interval>,
    pub counts: Vec<usize>,
    pub periodic: Vec<bool>,
}

impl GridPartition {
    pub fn new(domain: Vec<Interval>, counts: Vec<usize>, periodic: Vec<bool>) -> Result<Self, AbstractionError> {
        let g = Self {
            domain,
            counts,
            periodic,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), AbstractionError> {
        let bad = |m: String| Err(AbstractionError::InvalidGrid(m));
        if self.domain.len() != self.counts.len() || self.domain.len() != self.periodic.len() {
            return bad("domain, counts and periodic flags differ in length".into());
        }
        for (d, (iv, &n)) in self.domain.iter().zip(&self.counts).enumerate() {
            if n == 0 {
                return bad(format!("dimension {d} has no cells"));
            }
            if !(iv.lo < iv.hi) || !iv.lo.is_finite() || !iv.hi.is_finite() {
                return bad(format!("dimension {d} has empty or unbounded range [{}, {}]", iv.lo, iv.hi));
            }
        }
        let total = self.counts.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
        match total {
            Some(t) if t < u32::MAX as usize => Ok(()),
            _ => bad("too many cells".into()),
        }
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn n_cells(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn sink(&self) -> usize {
        self.n_cells()
    }

    /// `i`-th cell boundary in dimension `d`; the last equals the domain bound exactly.
    pub fn boundary(&self, d: usize, i: usize) -> f64 {
        let iv = self.domain[d];
        let n = self.counts[d];
        if i >= n {
            iv.hi
        } else {
            iv.lo + (iv.hi - iv.lo) * (i as f64) / (n as f64)
        }
    }

    pub fn cell_interval(&self, d: usize, i: usize) -> Interval {
        Interval::new(self.boundary(d, i), self.boundary(d, i + 1))
    }

    /// Index along dimension `d`, or `None` outside a non-periodic range.
    pub fn index_in_dim(&self, d: usize, v: f64) -> Option<usize> {
        let iv = self.domain[d];
        let n = self.counts[d];
        let v = if self.periodic[d] {
            crate::dynamics::wrap(v, iv)
        } else {
            if !(v >= iv.lo && v <= iv.hi) {
                return None;
            }
            v
        };
        let guess = (((v - iv.lo) / (iv.hi - iv.lo)) * n as f64).floor();
        let mut i = if guess.is_finite() { (guess.max(0.0) as usize).min(n - 1) } else { 0 };
        // fix rounding so that boundary(i) <= v < boundary(i + 1)
        while i > 0 && v < self.boundary(d, i) {
            i -= 1;
        }
        while i + 1 < n && v >= self.boundary(d, i + 1) {
            i += 1;
        }
        Some(i)
    }

    /// Cell containing `s`, or the sink id outside the domain.
    pub fn cell_of(&self, s: &[f64]) -> usize {
        let mut id = 0;
        for d in 0..self.dim() {
            match self.index_in_dim(d, s[d]) {
                Some(i) => id = id * self.counts[d] + i,
                None => return self.sink(),
            }
        }
        id
    }

    pub fn cell_id(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.counts).fold(0, |id, (&i, &n)| id * n + i)
    }

    pub fn multi_index(&self, mut id: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for d in (0..self.dim()).rev() {
            out[d] = id % self.counts[d];
            id /= self.counts[d];
        }
        out
    }

    pub fn cell_box(&self, id: usize) -> Vec<Interval> {
        self.multi_index(id)
            .iter()
            .enumerate()
            .map(|(d, &i)| self.cell_interval(d, i))
            .collect()
    }

    pub fn center(&self, id: usize) -> Vec<f64> {
        self.cell_box(id).iter().map(Interval::midpoint).collect()
    }
}

/// Uniform grid over the input box; a dimension with one point uses the midpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionGrid {
    pub bounds: Vec<Interval>,
    pub counts: Vec<usize>,
}

impl ActionGrid {
    pub fn new(bounds: Vec<Interval>, counts: Vec<usize>) -> Result<Self, AbstractionError> {
        if bounds.len() != counts.len() || counts.contains(&0) {
            return Err(AbstractionError::Config("action grid needs a positive count per input".into()));
        }
        Ok(Self { bounds, counts })
    }

    fn points(&self, d: usize) -> Vec<f64> {
        let iv = self.bounds[d];
        let n = self.counts[d];
        if n == 1 {
            return vec![iv.midpoint()];
        }
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    iv.hi
                } else {
                    iv.lo + (iv.hi - iv.lo) * (i as f64) / ((n - 1) as f64)
                }
            })
            .collect()
    }

    /// All input vectors, row-major with the last input fastest.
    pub fn inputs(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new()];
        for d in 0..self.bounds.len() {
            let pts = self.points(d);
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    pts.iter().map(move |&p| {
                        let mut v = prefix.clone();
                        v.push(p);
                        v
                    })
                })
                .collect();
        }
        out
    }
}

/// Axis-aligned box keyed by state-dimension name; omitted dimensions are unconstrained.
pub type Region = BTreeMap<String, Interval>;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelGeometry {
    #[serde(default)]
    pub goal: Vec<Region>,
    #[serde(default, rename = "unsafe")]
    pub unsafe_regions: Vec<Region>,
}

struct ResolvedRegion {
    bounds: Vec<Option<Interval>>,
}

impl ResolvedRegion {
    fn contains(&self, s: &[f64]) -> bool {
        self.bounds
            .iter()
            .zip(s)
            .all(|(b, &v)| b.is_none_or(|iv| iv.contains(v)))
    }
}

fn resolve_regions(
    regions: &[Region],
    kind: &'static str,
    names: &[&str],
    grid: &GridPartition,
) -> Result<Vec<ResolvedRegion>, AbstractionError> {
    let mut out = Vec::new();
    for (index, region) in regions.iter().enumerate() {
        let mut bounds = vec![None; names.len()];
        for (name, iv) in region {
            let d = names.iter().position(|n| n == name).ok_or_else(|| {
                AbstractionError::Config(format!("{kind} box {index} names unknown dimension `{name}`"))
            })?;
            bounds[d] = Some(*iv);
        }
        // a cell cut by a boundary: the cut index in that dimension, the
        // first covered index elsewhere
        let first_inside = |d: usize| -> usize {
            bounds[d].map_or(0, |iv: Interval| grid.index_in_dim(d, iv.lo.max(grid.domain[d].lo)).unwrap_or(0))
        };
        for d in 0..names.len() {
            let Some(iv) = bounds[d] else { continue };
            for value in [iv.lo, iv.hi] {
                let dom = grid.domain[d];
                if value <= dom.lo || value >= dom.hi {
                    continue;
                }
                let i = grid.index_in_dim(d, value).expect("inside domain");
                let tol = 1e-9 * (1.0 + value.abs());
                let aligned = (value - grid.boundary(d, i)).abs() <= tol || (grid.boundary(d, i + 1) - value).abs() <= tol;
                if !aligned {
                    let multi: Vec<usize> = (0..names.len()).map(|e| if e == d { i } else { first_inside(e) }).collect();
                    return Err(AbstractionError::MisalignedGeometry {
                        region: kind,
                        index,
                        dim: d,
                        value,
                        cell: grid.cell_id(&multi),
                    });
                }
            }
        }
        out.push(ResolvedRegion { bounds });
    }
    Ok(out)
}

/// Labels of every cell (sink excluded) under aligned geometry.
pub fn cell_labels(grid: &GridPartition, names: &[&str], geometry: &LabelGeometry) -> Result<Vec<LabelSet>, AbstractionError> {
    let goal = resolve_regions(&geometry.goal, "goal", names, grid)?;
    let bad = resolve_regions(&geometry.unsafe_regions, "unsafe", names, grid)?;
    Ok((0..grid.n_cells())
        .map(|c| {
            let center = grid.center(c);
            let mut l = LabelSet::EMPTY;
            if goal.iter().any(|r| r.contains(&center)) {
                l.insert(0);
            }
            if bad.iter().any(|r| r.contains(&center)) {
                l.insert(1);
            }
            l
        })
        .collect())
}

/// Labels of a concrete state: what its cell is labeled, the sink being unsafe.
pub fn state_label(grid: &GridPartition, labels: &[LabelSet], s: &[f64]) -> LabelSet {
    let c = grid.cell_of(s);
    if c == grid.sink() {
        LabelSet::single(1)
    } else {
        labels[c]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbstractionOptions {
    pub initial_state: Vec<f64>,
    #[serde(default = "default_prune_sigmas")]
    pub prune_sigmas: f64,
    /// Goal and unsafe cells get a single `[1,1]` self-loop instead of computed rows.
    #[serde(default = "default_true")]
    pub absorbing_labeled_cells: bool,
}

fn default_prune_sigmas() -> f64 {
    6.0
}

fn default_true() -> bool {
    true
}

/// Per-dimension candidate target indices with their probability factors.
#[derive(Debug, Default)]
struct DimFactors {
    entries: Vec<(usize, Interval)>,
    /// Mass may leave a non-periodic range.
    escapes: bool,
    /// Upper bound on the mass of dropped noisy targets.
    tail: f64,
}

// Probability factor for one deterministic coordinate landing in `cell`
// given the coordinate ranges over `reach`.
fn membership(reach: Interval, cell: Interval, closed: bool) -> Option<Interval> {
    let below_end = |v: f64| if closed { v <= cell.hi } else { v < cell.hi };
    if reach.lo >= cell.lo && below_end(reach.hi) {
        Some(Interval::point(1.0))
    } else if reach.hi >= cell.lo && below_end(reach.lo) {
        Some(Interval::new(0.0, 1.0))
    } else {
        None
    }
}

fn noisy_bounds(cell: Interval, reach: Interval, sd: f64) -> Result<Interval, AbstractionError> {
    let b = gaussian_mass_bounds(cell, reach, sd)?;
    Ok(Interval::new((b.lo - MASS_SLACK).max(0.0), (b.hi + MASS_SLACK).min(1.0)))
}

// Candidate cells along dimension `d` for a reach interval. `window_sigmas`
// limits how far noisy dimensions look.
fn dim_factors(grid: &GridPartition, d: usize, reach: Interval, sd: f64, window_sigmas: f64) -> Result<DimFactors, AbstractionError> {
    let dom = grid.domain[d];
    let n = grid.counts[d];
    let mut out = DimFactors::default();
    let window = if sd > 0.0 {
        out.tail = 2.0 * normal_sf(window_sigmas);
        reach.inflate(window_sigmas * sd)
    } else {
        reach
    };
    if grid.periodic[d] {
        let period = dom.width();
        let width = period / n as f64;
        let jmin = ((window.lo - dom.lo) / width).floor() as i64 - 1;
        let jmax = ((window.hi - dom.lo) / width).floor() as i64 + 1;
        let mut acc: BTreeMap<usize, Interval> = BTreeMap::new();
        for j in jmin..=jmax {
            let c = j.rem_euclid(n as i64) as usize;
            let shift = j.div_euclid(n as i64) as f64 * period;
            let cell = grid.cell_interval(d, c).shift(shift);
            let factor = if sd > 0.0 {
                if !(cell.lo <= window.hi && cell.hi >= window.lo) {
                    continue;
                }
                noisy_bounds(cell, reach, sd)?
            } else {
                match membership(reach, cell, false) {
                    Some(f) => f,
                    None => continue,
                }
            };
            let e = acc.entry(c).or_insert(Interval::point(0.0));
            *e = Interval::new(e.lo + factor.lo, (e.hi + factor.hi).min(1.0));
        }
        out.entries = acc.into_iter().collect();
        if sd == 0.0 {
            out.entries.retain(|(_, f)| f.hi > 0.0);
        }
        return Ok(out);
    }
    out.escapes = window.lo < dom.lo || window.hi > dom.hi;
    if window.hi < dom.lo || window.lo > dom.hi {
        return Ok(out);
    }
    let first = grid.index_in_dim(d, window.lo.max(dom.lo)).expect("clamped into range");
    let last = grid.index_in_dim(d, window.hi.min(dom.hi)).expect("clamped into range");
    for i in first..=last {
        let cell = grid.cell_interval(d, i);
        let factor = if sd > 0.0 {
            noisy_bounds(cell, reach, sd)?
        } else {
            match membership(reach, cell, i + 1 == n) {
                Some(f) => f,
                None => continue,
            }
        };
        if factor.hi > 0.0 {
            out.entries.push((i, factor));
        }
    }
    if sd > 0.0 {
        // the escaping mass is covered by the sink's residual bound
        out.tail = if out.escapes { 0.0 } else { out.tail };
    }
    Ok(out)
}

/// Interval row for `(cell, input)`: `(target id, lo, hi)` sorted by target,
/// the sink last when present.
pub fn transition_intervals<S: ParametricSystem>(
    system: &S,
    grid: &GridPartition,
    cell: usize,
    input: &[f64],
    prune_sigmas: f64,
) -> Result<Vec<(u32, f64, f64)>, AbstractionError> {
    let src = grid.cell_box(cell);
    let reach = system.reach(&src, input)?;
    let sds = system.noise_std();
    let mut dims = Vec::with_capacity(grid.dim());
    for d in 0..grid.dim() {
        dims.push(dim_factors(grid, d, reach[d], sds[d], prune_sigmas)?);
    }
    let escapes = dims.iter().any(|f| f.escapes);
    let tail: f64 = dims.iter().map(|f| f.tail).sum();

    let mut row = Vec::new();
    if dims.iter().all(|f| !f.entries.is_empty()) {
        let mut pos = vec![0usize; dims.len()];
        'targets: loop {
            let (mut id, mut lo, mut hi) = (0usize, 1.0f64, 1.0f64);
            for (d, f) in dims.iter().enumerate() {
                let (i, factor) = f.entries[pos[d]];
                id = id * grid.counts[d] + i;
                lo *= factor.lo;
                hi *= factor.hi;
            }
            if hi > 0.0 {
                row.push((id as u32, lo, hi));
            }
            // odometer, last dimension fastest
            let mut d = dims.len();
            loop {
                if d == 0 {
                    break 'targets;
                }
                d -= 1;
                pos[d] += 1;
                if pos[d] < dims[d].entries.len() {
                    break;
                }
                pos[d] = 0;
            }
        }
    }

    let sum_lo: f64 = row.iter().map(|e| e.1).sum();
    let sum_hi: f64 = row.iter().map(|e| e.2).sum();
    let sink_lo = (1.0 - sum_hi).max(0.0);
    let sink_hi = if escapes { 1.0 - sum_lo } else { (1.0 - sum_lo).min(tail) }.clamp(0.0, 1.0);
    if sink_hi > 0.0 {
        row.push((grid.sink() as u32, sink_lo.min(sink_hi), sink_hi));
    }
    let tol = 1e-9;
    let total_lo: f64 = row.iter().map(|e| e.1).sum();
    let total_hi: f64 = row.iter().map(|e| e.2).sum();
    if row.is_empty() || total_lo > 1.0 + tol || total_hi < 1.0 - tol {
        return Err(AbstractionError::InfeasibleRow {
            cell,
            action: 0,
            detail: format!("Σlo = {total_lo}, Σhi = {total_hi}"),
        });
    }
    Ok(row)
}

/// Bounds on the probability of landing in an arbitrary box `target` (given
/// per dimension, within the domain) from any state of `source` under
/// `input`, without pruning.
pub fn region_interval<S: ParametricSystem>(
    system: &S,
    grid: &GridPartition,
    source: &[Interval],
    input: &[f64],
    target: &[Interval],
) -> Result<Interval, AbstractionError> {
    let reach = system.reach(source, input)?;
    let sds = system.noise_std();
    let (mut lo, mut hi) = (1.0, 1.0);
    for d in 0..grid.dim() {
        let t = target[d];
        let closed = !grid.periodic[d] && t.hi >= grid.domain[d].hi;
        let f = if grid.periodic[d] {
            let period = grid.domain[d].width();
            let window = if sds[d] > 0.0 { reach[d].inflate(EXACT_SIGMAS * sds[d]) } else { reach[d] };
            let kmin = ((window.lo - t.hi) / period).floor() as i64 - 1;
            let kmax = ((window.hi - t.lo) / period).ceil() as i64 + 1;
            let mut acc = Interval::point(0.0);
            for k in kmin..=kmax {
                let shifted = t.shift(k as f64 * period);
                let part = if sds[d] > 0.0 {
                    noisy_bounds(shifted, reach[d], sds[d])?
                } else {
                    membership(reach[d], shifted, false).unwrap_or(Interval::point(0.0))
                };
                acc = Interval::new(acc.lo + part.lo, (acc.hi + part.hi).min(1.0));
            }
            acc
        } else if sds[d] > 0.0 {
            noisy_bounds(t, reach[d], sds[d])?
        } else {
            membership(reach[d], t, closed).unwrap_or(Interval::point(0.0))
        };
        lo *= f.lo;
        hi *= f.hi;
    }
    Ok(Interval::new(lo, hi))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbstractionMeta {
    pub grid: GridPartition,
    pub state_names: Vec<String>,
    pub input_names: Vec<String>,
    /// Interface map: abstract action id → concrete input vector.
    pub actions: Vec<Vec<f64>>,
    pub geometry: LabelGeometry,
    pub initial_state: Vec<f64>,
    pub initial_cell: usize,
    pub sink: usize,
    pub param_box: Vec<Interval>,
    pub noise_std: Vec<f64>,
    pub prune_sigmas: f64,
    /// Upper bound on the mass dropped per row by pruning.
    pub pruned_mass_bound: f64,
    pub absorbing_labeled_cells: bool,
    pub n_states: usize,
    pub n_rows: usize,
    pub n_transitions: usize,
}

#[derive(Clone, Debug)]
pub struct AbstractionOutput {
    pub imdp: IntervalMdp<f64>,
    pub meta: AbstractionMeta,
}

pub fn build_abstraction<S: ParametricSystem>(
    system: &S,
    grid: &GridPartition,
    actions: &ActionGrid,
    geometry: &LabelGeometry,
    options: &AbstractionOptions,
) -> Result<AbstractionOutput, AbstractionError> {
    grid.validate()?;
    if grid.dim() != system.dim() {
        return Err(AbstractionError::InvalidGrid(format!(
            "grid has {} dimensions, system has {}",
            grid.dim(),
            system.dim()
        )));
    }
    for (d, per) in system.periodic().iter().enumerate() {
        let ok = match per {
            Some(base) => grid.periodic[d] && (grid.domain[d].lo - base.lo).abs() < 1e-12 && (grid.domain[d].hi - base.hi).abs() < 1e-12,
            None => !grid.periodic[d],
        };
        if !ok {
            return Err(AbstractionError::InvalidGrid(format!(
                "dimension {d} periodicity does not match the system"
            )));
        }
    }
    if actions.bounds.len() != system.input_bounds().len() {
        return Err(AbstractionError::Config("action grid does not match the input dimension".into()));
    }
    if !(options.prune_sigmas > 0.0) {
        return Err(AbstractionError::Config("prune_sigmas must be positive".into()));
    }
    if options.initial_state.len() != grid.dim() {
        return Err(AbstractionError::Config("initial state has the wrong dimension".into()));
    }
    let initial_cell = grid.cell_of(&options.initial_state);
    if initial_cell == grid.sink() {
        return Err(AbstractionError::Config("initial state lies outside the domain".into()));
    }
    let names = system.state_names();
    let labels = cell_labels(grid, &names, geometry)?;
    let inputs = actions.inputs();
    let n_cells = grid.n_cells();

    type CellRows = Vec<(u32, Vec<(u32, f64, f64)>)>;
    let rows: Vec<CellRows> = (0..n_cells)
        .into_par_iter()
        .map(|c| -> Result<CellRows, AbstractionError> {
            if options.absorbing_labeled_cells && labels[c] != LabelSet::EMPTY {
                return Ok(vec![(0, vec![(c as u32, 1.0, 1.0)])]);
            }
            inputs
                .iter()
                .enumerate()
                .map(|(a, u)| {
                    transition_intervals(system, grid, c, u, options.prune_sigmas)
                        .map(|row| (a as u32, row))
                        .map_err(|e| match e {
                            AbstractionError::InfeasibleRow { cell, detail, .. } => {
                                AbstractionError::InfeasibleRow { cell, action: a, detail }
                            }
                            other => other,
                        })
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;

    let n_rows: usize = rows.iter().map(Vec::len).sum::<usize>() + 1;
    let n_transitions: usize = rows.iter().flatten().map(|r| r.1.len()).sum::<usize>() + 1;
    let mut b = ImdpBuilder::new(n_cells + 1, vec![GOAL.to_string(), UNSAFE.to_string()]).with_capacity(n_rows, n_transitions);
    for (c, cell_rows) in rows.into_iter().enumerate() {
        b.set_label(c, labels[c]);
        for (a, row) in cell_rows {
            b.push_row(c, a, row)?;
        }
    }
    let sink = grid.sink();
    b.set_label(sink, LabelSet::single(1));
    b.set_sink(sink);
    b.push_row(sink, 0, [(sink as u32, 1.0, 1.0)])?;
    b.set_initial(initial_cell);
    let imdp = b.build()?;

    let meta = AbstractionMeta {
        grid: grid.clone(),
        state_names: names.iter().map(|s| s.to_string()).collect(),
        input_names: system.input_names().iter().map(|s| s.to_string()).collect(),
        actions: inputs,
        geometry: geometry.clone(),
        initial_state: options.initial_state.clone(),
        initial_cell,
        sink,
        param_box: system.param_box(),
        noise_std: system.noise_std(),
        prune_sigmas: options.prune_sigmas,
        pruned_mass_bound: 2.0 * normal_sf(options.prune_sigmas),
        absorbing_labeled_cells: options.absorbing_labeled_cells,
        n_states: imdp.n_states(),
        n_rows: imdp.n_rows(),
        n_transitions: imdp.n_transitions(),
    };
    Ok(AbstractionOutput { imdp, meta })
}
