//! Concrete controllers from abstract policies, and Monte Carlo validation.
//!
//! The controller maps a concrete state to its grid cell, looks up the
//! abstract action there and applies that action's input vector. Simulation
//! runs the noisy system with fixed true parameters until the goal is reached
//! (success), an unsafe cell or the outside of the domain is entered
//! (failure), or the horizon is exhausted (failure).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::abstraction::{state_label, AbstractionMeta, GridPartition};
use crate::dynamics::ParametricSystem;
use crate::error::SimulationError;
use crate::imdp::{ImdpPolicy, SolveResult};
use crate::model::LabelSet;

pub const DEFAULT_HORIZON: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcreteController {
    pub grid: GridPartition,
    pub policy: ImdpPolicy,
    /// Abstract action id → concrete input vector.
    pub actions: Vec<Vec<f64>>,
}

impl ConcreteController {
    /// Input at time `k`, or `None` outside the domain.
    pub fn input(&self, k: usize, s: &[f64]) -> Option<&[f64]> {
        let c = self.grid.cell_of(s);
        if c == self.grid.sink() {
            return None;
        }
        Some(&self.actions[self.policy.action(k, c) as usize])
    }

    fn validate(&self) -> Result<(), SimulationError> {
        let n_steps = match &self.policy {
            ImdpPolicy::Stationary(_) => 1,
            ImdpPolicy::PerStep(steps) => steps.len(),
        };
        if n_steps == 0 || self.policy.n_states() < self.grid.n_cells() {
            return Err(SimulationError::UncoveredCell(self.policy.n_states().min(self.grid.n_cells())));
        }
        for k in 0..n_steps {
            for c in 0..self.grid.n_cells() {
                let a = self.policy.action(k, c);
                if a as usize >= self.actions.len() {
                    return Err(SimulationError::UnknownAction { cell: c, action: a });
                }
            }
        }
        Ok(())
    }
}

pub fn refine_abstract_policy(solve: &SolveResult<f64>, meta: &AbstractionMeta) -> Result<ConcreteController, SimulationError> {
    let c = ConcreteController {
        grid: meta.grid.clone(),
        policy: solve.policy.clone(),
        actions: meta.actions.clone(),
    };
    c.validate()?;
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Goal,
    Unsafe,
    Exit,
    Timeout,
}

impl Outcome {
    pub fn satisfied(self) -> bool {
        self == Outcome::Goal
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Goal => "goal",
            Outcome::Unsafe => "unsafe",
            Outcome::Exit => "exit",
            Outcome::Timeout => "timeout",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Outcome::Goal, Outcome::Unsafe, Outcome::Exit, Outcome::Timeout]
            .into_iter()
            .find(|o| o.as_str() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub outcome: Outcome,
    /// Index of the step at which the run ended.
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSetup {
    pub runs: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    pub seed: u64,
    pub initial_state: Vec<f64>,
    pub true_params: Vec<f64>,
    /// Number of leading runs whose full trajectories are kept.
    #[serde(default)]
    pub record: usize,
}

fn default_horizon() -> usize {
    DEFAULT_HORIZON
}

/// One trajectory row: the state at step `k` and the input applied there
/// (`None` on the final row).
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub run: usize,
    pub k: usize,
    pub state: Vec<f64>,
    pub input: Option<Vec<f64>>,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationStats {
    pub runs: usize,
    pub satisfied: usize,
    pub frequency: f64,
    /// 95% Clopper–Pearson interval for the satisfaction probability.
    pub ci_low: f64,
    pub ci_high: f64,
    pub rho_star: Option<f64>,
    pub seed: u64,
    pub horizon: usize,
    pub true_params: Vec<f64>,
    /// Hoeffding deviation at 99% confidence for this run count.
    pub hoeffding_epsilon: f64,
    /// Runs per outcome (`goal`, `unsafe`, `exit`, `timeout`).
    pub outcome_counts: BTreeMap<String, usize>,
    #[serde(skip)]
    pub outcomes: Vec<RunOutcome>,
    #[serde(skip)]
    pub trajectories: Vec<TrajectoryRow>,
}

impl SimulationStats {
    /// `frequency ≥ ρ* − ε`, when a bound is attached.
    pub fn passes_gate(&self) -> Option<bool> {
        self.rho_star.map(|r| self.frequency >= r - self.hoeffding_epsilon)
    }
}

/// `sqrt(ln(1/δ) / (2n))`: one-sided deviation of an empirical mean of `n`
/// Bernoulli draws at confidence `1 − δ`.
pub fn hoeffding_epsilon(runs: usize, delta: f64) -> f64 {
    ((1.0 / delta).ln() / (2.0 * runs as f64)).sqrt()
}

/// Exact binomial confidence interval at level `1 − alpha`.
pub fn clopper_pearson(successes: usize, runs: usize, alpha: f64) -> (f64, f64) {
    if runs == 0 {
        return (0.0, 1.0);
    }
    let (k, n) = (successes as f64, runs as f64);
    let lo = if successes == 0 {
        0.0
    } else {
        Beta::new(k, n - k + 1.0).expect("positive shapes").inverse_cdf(alpha / 2.0)
    };
    let hi = if successes == runs {
        1.0
    } else {
        Beta::new(k + 1.0, n - k).expect("positive shapes").inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo, hi)
}

fn simulate_run<S: ParametricSystem>(
    system: &S,
    controller: &ConcreteController,
    labels: &[LabelSet],
    setup: &SimulationSetup,
    run: usize,
    record: bool,
) -> Result<(RunOutcome, Vec<TrajectoryRow>), SimulationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    rng.set_stream(run as u64);
    let grid = &controller.grid;
    let mut s = setup.initial_state.clone();
    let mut rows = Vec::new();
    let mut k = 0;
    let outcome = loop {
        let l = state_label(grid, labels, &s);
        let ended = if grid.cell_of(&s) == grid.sink() {
            Some(Outcome::Exit)
        } else if l.contains(1) {
            Some(Outcome::Unsafe)
        } else if l.contains(0) {
            Some(Outcome::Goal)
        } else if k == setup.horizon {
            Some(Outcome::Timeout)
        } else {
            None
        };
        if let Some(o) = ended {
            if record {
                rows.push((k, s.clone(), None));
            }
            break o;
        }
        let u = controller.input(k, &s).expect("inside the domain").to_vec();
        let next = system.sample_next(&s, &u, &setup.true_params, &mut rng)?;
        if record {
            rows.push((k, std::mem::replace(&mut s, next), Some(u)));
        } else {
            s = next;
        }
        k += 1;
    };
    let rows = rows
        .into_iter()
        .map(|(k, state, input)| TrajectoryRow {
            run,
            k,
            state,
            input,
            outcome,
        })
        .collect();
    Ok((RunOutcome { outcome, steps: k }, rows))
}

/// Runs are independent and seeded by `(seed, run index)`, so results do not
/// depend on the thread count.
pub fn run_monte_carlo<S: ParametricSystem>(
    system: &S,
    controller: &ConcreteController,
    labels: &[LabelSet],
    setup: &SimulationSetup,
) -> Result<SimulationStats, SimulationError> {
    controller.validate()?;
    if setup.runs == 0 || setup.horizon == 0 {
        return Err(SimulationError::Config("runs and horizon must be positive".into()));
    }
    if setup.initial_state.len() != system.dim() || setup.true_params.len() != system.param_box().len() {
        return Err(SimulationError::Config("initial state or parameters have the wrong dimension".into()));
    }
    if labels.len() != controller.grid.n_cells() {
        return Err(SimulationError::Config("labels do not match the grid".into()));
    }
    let results: Vec<(RunOutcome, Vec<TrajectoryRow>)> = (0..setup.runs)
        .into_par_iter()
        .map(|run| simulate_run(system, controller, labels, setup, run, run < setup.record))
        .collect::<Result<_, _>>()?;
    let satisfied = results.iter().filter(|r| r.0.outcome.satisfied()).count();
    let (ci_low, ci_high) = clopper_pearson(satisfied, setup.runs, 0.05);
    let mut outcomes = Vec::with_capacity(results.len());
    let mut trajectories = Vec::new();
    let mut outcome_counts = BTreeMap::new();
    for (o, rows) in results {
        *outcome_counts.entry(o.outcome.as_str().to_string()).or_insert(0) += 1;
        outcomes.push(o);
        trajectories.extend(rows);
    }
    Ok(SimulationStats {
        runs: setup.runs,
        satisfied,
        frequency: satisfied as f64 / setup.runs as f64,
        ci_low,
        ci_high,
        rho_star: None,
        seed: setup.seed,
        horizon: setup.horizon,
        true_params: setup.true_params.clone(),
        hoeffding_epsilon: hoeffding_epsilon(setup.runs, 0.01),
        outcome_counts,
        outcomes,
        trajectories,
    })
}

/// CSV with columns `run, k, <state names>, <input names>, outcome`; inputs
/// are empty on each run's final row.
pub fn write_trajectories<W: Write>(
    rows: &[TrajectoryRow],
    state_names: &[String],
    input_names: &[String],
    w: W,
) -> Result<(), SimulationError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["run".to_string(), "k".to_string()];
    header.extend(state_names.iter().cloned());
    header.extend(input_names.iter().cloned());
    header.push("outcome".into());
    out.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.run.to_string(), r.k.to_string()];
        rec.extend(r.state.iter().map(|v| v.to_string()));
        match &r.input {
            Some(u) => rec.extend(u.iter().map(|v| v.to_string())),
            None => rec.extend(input_names.iter().map(|_| String::new())),
        }
        rec.push(r.outcome.as_str().into());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_trajectories_file(
    rows: &[TrajectoryRow],
    state_names: &[String],
    input_names: &[String],
    path: &Path,
) -> Result<(), SimulationError> {
    write_trajectories(rows, state_names, input_names, std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// Parses a file written by [`write_trajectories`]; `n_state` columns follow `k`.
pub fn read_trajectories<R: Read>(r: R, n_state: usize) -> Result<Vec<TrajectoryRow>, SimulationError> {
    let mut rdr = csv::Reader::from_reader(r);
    let n_cols = rdr.headers()?.len();
    if n_cols < n_state + 3 {
        return Err(SimulationError::Config(format!("{n_cols} columns is too few")));
    }
    let n_input = n_cols - n_state - 3;
    let bad = |line: usize, what: &str| SimulationError::Config(format!("record {line}: bad {what}"));
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |j: usize| rec[j].parse::<f64>().map_err(|_| bad(i + 1, "number"));
        let state = (0..n_state).map(|j| num(2 + j)).collect::<Result<Vec<_>, _>>()?;
        let input = if rec[2 + n_state].is_empty() {
            None
        } else {
            Some((0..n_input).map(|j| num(2 + n_state + j)).collect::<Result<Vec<_>, _>>()?)
        };
        rows.push(TrajectoryRow {
            run: rec[0].parse().map_err(|_| bad(i + 1, "run"))?,
            k: rec[1].parse().map_err(|_| bad(i + 1, "step"))?,
            state,
            input,
            outcome: Outcome::parse(&rec[n_cols - 1]).ok_or_else(|| bad(i + 1, "outcome"))?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::GridPartition;
    use crate::dynamics::DubinsParams;
    use crate::Interval;
    use std::f64::consts::PI;

    fn grid() -> GridPartition {
        GridPartition::new(
            vec![Interval::new(0.0, 10.0), Interval::new(0.0, 6.0), Interval::new(-PI, PI), Interval::new(-3.0, 3.0)],
            vec![2, 2, 2, 2],
            vec![false, false, true, false],
        )
        .unwrap()
    }

    fn setup(runs: usize, horizon: usize) -> SimulationSetup {
        SimulationSetup {
            runs,
            horizon,
            seed: 11,
            initial_state: vec![1.0, 1.0, 0.0, 0.0],
            true_params: vec![0.85, 0.85],
            record: runs,
        }
    }

    fn constant(g: &GridPartition, u: Vec<f64>) -> ConcreteController {
        ConcreteController {
            grid: g.clone(),
            policy: ImdpPolicy::Stationary(vec![0; g.n_cells() + 1]),
            actions: vec![u],
        }
    }

    #[test]
    fn clopper_pearson_reference() {
        let (lo, hi) = clopper_pearson(5, 10, 0.05);
        assert!((lo - 0.187_086_028_447_161_8).abs() < 1e-9, "{lo}");
        assert!((hi - 0.812_913_971_552_838_2).abs() < 1e-9, "{hi}");
        assert_eq!(clopper_pearson(0, 10, 0.05).0, 0.0);
        assert_eq!(clopper_pearson(10, 10, 0.05).1, 1.0);
        assert!((hoeffding_epsilon(10_000, 0.01) - 0.015_174_271_293_851_463).abs() < 1e-15);
    }

    #[test]
    fn all_goal_always_succeeds() {
        let g = grid();
        let labels = vec![LabelSet::single(0); g.n_cells()];
        let stats = run_monte_carlo(&DubinsParams::default(), &constant(&g, vec![0.0, 0.0]), &labels, &setup(20, 5)).unwrap();
        assert_eq!(stats.satisfied, 20);
        assert_eq!(stats.frequency, 1.0);
    }

    #[test]
    fn surrounded_by_unsafe_always_fails() {
        let g = grid();
        let start = g.cell_of(&[1.0, 1.0, 0.0, 0.0]);
        let labels: Vec<LabelSet> = (0..g.n_cells())
            .map(|c| if c == start { LabelSet::EMPTY } else { LabelSet::single(1) })
            .collect();
        let stats = run_monte_carlo(&DubinsParams::default(), &constant(&g, vec![0.0, 5.0]), &labels, &setup(20, 10)).unwrap();
        assert_eq!(stats.satisfied, 0);
        assert!(stats.outcomes.iter().all(|o| o.outcome == Outcome::Unsafe));
    }

    #[test]
    fn controller_factors_through_cells() {
        let g = grid();
        let mut actions: Vec<u32> = (0..=g.n_cells() as u32).map(|c| c % 3).collect();
        actions[g.n_cells()] = 0;
        let c = ConcreteController {
            grid: g.clone(),
            policy: ImdpPolicy::Stationary(actions),
            actions: vec![vec![0.0, 0.0], vec![0.5, 1.0], vec![-0.5, -1.0]],
        };
        let a = c.input(0, &[0.1, 0.1, 0.1, 0.1]).unwrap().to_vec();
        let b = c.input(0, &[4.9, 2.9, 3.0, 2.9]).unwrap().to_vec();
        assert_eq!(a, b);
        assert!(c.input(0, &[11.0, 0.0, 0.0, 0.0]).is_none());
    }

    #[test]
    fn trajectories_round_trip() {
        let g = grid();
        let labels = vec![LabelSet::EMPTY; g.n_cells()];
        let stats = run_monte_carlo(&DubinsParams::default(), &constant(&g, vec![0.1, 0.0]), &labels, &setup(1, 2)).unwrap();
        assert_eq!(stats.trajectories.len(), 3);
        assert_eq!(stats.outcomes[0], RunOutcome { outcome: Outcome::Timeout, steps: 2 });
        let names: Vec<String> = ["x", "y", "theta", "V"].iter().map(|s| s.to_string()).collect();
        let inputs = vec!["u".to_string(), "u'".to_string()];
        let mut buf = Vec::new();
        write_trajectories(&stats.trajectories, &names, &inputs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("run,k,x,y,theta,V,u,u',outcome\n"));
        assert_eq!(read_trajectories(buf.as_slice(), 4).unwrap(), stats.trajectories);
    }

    #[test]
    fn simulation_is_reproducible() {
        let g = grid();
        let labels = vec![LabelSet::EMPTY; g.n_cells()];
        let c = constant(&g, vec![0.3, 1.0]);
        let a = run_monte_carlo(&DubinsParams::default(), &c, &labels, &setup(50, 8)).unwrap();
        let b = run_monte_carlo(&DubinsParams::default(), &c, &labels, &setup(50, 8)).unwrap();
        assert_eq!(a, b);
    }
}
