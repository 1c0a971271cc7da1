//! JSON configuration for the abstraction → solve → simulate pipeline.
//!
//! One file holds four sections; each stage reads the ones it needs:
//!
//! ```json
//! {
//!   "system": { "dynamics": { "delta": 0.5, ... }, "true_params": { "alpha": 0.85, "beta": 0.85 } },
//!   "abstraction": { "domain": { "x": [0, 10], ... }, "cells": { "x": 10, ... }, ... },
//!   "solve": { "horizon": { "finite": 40 } },
//!   "simulate": { "runs": 10000, "seed": 7 }
//! }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::abstraction::{AbstractionOptions, ActionGrid, GridPartition, LabelGeometry, Region, GOAL, UNSAFE};
use crate::dynamics::{DubinsParams, ParametricSystem, StateVec};
use crate::error::AbstractionError;
use crate::objective::{Horizon, ReachAvoidSpec};
use crate::refine::{SimulationSetup, DEFAULT_HORIZON};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrueParams {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub dynamics: DubinsParams,
    pub true_params: TrueParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbstractionConfig {
    /// Range per state dimension; the heading may be omitted (it wraps on `[-π, π)`).
    pub domain: BTreeMap<String, crate::Interval>,
    pub cells: BTreeMap<String, usize>,
    /// Grid points per input.
    pub action_grid: BTreeMap<String, usize>,
    #[serde(default)]
    pub goal: Vec<Region>,
    #[serde(default, rename = "unsafe")]
    pub unsafe_regions: Vec<Region>,
    pub initial_state: StateVec,
    #[serde(default = "default_prune")]
    pub prune_sigmas: f64,
    #[serde(default = "default_true")]
    pub absorbing_labeled_cells: bool,
}

fn default_prune() -> f64 {
    6.0
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub horizon: Horizon,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub runs: usize,
    /// Defaults to the finite solve horizon, else 64 steps.
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Number of leading runs written to the trajectory file.
    #[serde(default = "default_record")]
    pub record: usize,
}

fn default_record() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub system: SystemConfig,
    pub abstraction: AbstractionConfig,
    pub solve: SolveConfig,
    pub simulate: SimulateConfig,
}

/// Everything `build_abstraction` needs, resolved against the system.
#[derive(Clone, Debug)]
pub struct ResolvedAbstraction {
    pub grid: GridPartition,
    pub actions: ActionGrid,
    pub geometry: LabelGeometry,
    pub options: AbstractionOptions,
}

impl AbstractionConfig {
    pub fn resolve(&self, system: &impl ParametricSystem) -> Result<ResolvedAbstraction, AbstractionError> {
        let names = system.state_names();
        let periodic = system.periodic();
        for key in self.domain.keys().chain(self.cells.keys()) {
            if !names.contains(&key.as_str()) {
                return Err(AbstractionError::Config(format!("unknown state dimension `{key}`")));
            }
        }
        let mut domain = Vec::new();
        let mut counts = Vec::new();
        for (d, name) in names.iter().enumerate() {
            let iv = match (self.domain.get(*name), periodic[d]) {
                (Some(iv), None) => *iv,
                (None, Some(base)) => base,
                (Some(_), Some(_)) => {
                    return Err(AbstractionError::Config(format!("`{name}` wraps around; its range is fixed")))
                }
                (None, None) => return Err(AbstractionError::Config(format!("missing range for `{name}`"))),
            };
            domain.push(iv);
            counts.push(
                *self
                    .cells
                    .get(*name)
                    .ok_or_else(|| AbstractionError::Config(format!("missing cell count for `{name}`")))?,
            );
        }
        let grid = GridPartition::new(domain, counts, periodic.iter().map(Option::is_some).collect())?;

        let input_names = system.input_names();
        for key in self.action_grid.keys() {
            if !input_names.contains(&key.as_str()) {
                return Err(AbstractionError::Config(format!("unknown input `{key}`")));
            }
        }
        let action_counts = input_names
            .iter()
            .map(|n| {
                self.action_grid
                    .get(*n)
                    .copied()
                    .ok_or_else(|| AbstractionError::Config(format!("missing action grid count for `{n}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let actions = ActionGrid::new(system.input_bounds(), action_counts)?;

        Ok(ResolvedAbstraction {
            grid,
            actions,
            geometry: LabelGeometry {
                goal: self.goal.clone(),
                unsafe_regions: self.unsafe_regions.clone(),
            },
            options: AbstractionOptions {
                initial_state: self.initial_state.to_array().to_vec(),
                prune_sigmas: self.prune_sigmas,
                absorbing_labeled_cells: self.absorbing_labeled_cells,
            },
        })
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, AbstractionError> {
        serde_json::from_str(text).map_err(|e| AbstractionError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, AbstractionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AbstractionError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn spec(&self) -> ReachAvoidSpec {
        ReachAvoidSpec::new(GOAL, UNSAFE, self.solve.horizon)
    }

    pub fn simulation_horizon(&self) -> usize {
        self.simulate.horizon.unwrap_or(match self.solve.horizon {
            Horizon::Finite(n) => n,
            Horizon::Unbounded => DEFAULT_HORIZON,
        })
    }

    pub fn simulation_setup(&self, seed: u64) -> SimulationSetup {
        SimulationSetup {
            runs: self.simulate.runs,
            horizon: self.simulation_horizon(),
            seed,
            initial_state: self.abstraction.initial_state.to_array().to_vec(),
            true_params: vec![self.system.true_params.alpha, self.system.true_params.beta],
            record: self.simulate.record.min(self.simulate.runs),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
        "system": {
            "dynamics": {
                "delta": 0.5, "alpha": [0.8, 0.9], "beta": [0.8, 0.9], "noise": 0.1,
                "steer": [-1.5707963267948966, 1.5707963267948966], "accel": [-5, 5], "speed": [-3, 3]
            },
            "true_params": { "alpha": 0.85, "beta": 0.85 }
        },
        "abstraction": {
            "domain": { "x": [0, 4], "y": [0, 2], "V": [-3, 3] },
            "cells": { "x": 4, "y": 2, "theta": 4, "V": 4 },
            "action_grid": { "u": 3, "u'": 3 },
            "goal": [ { "x": [3, 4] } ],
            "unsafe": [ { "y": [1, 2], "x": [1, 2] } ],
            "initial_state": { "x": 0.5, "y": 0.5, "theta": 0, "V": 0 }
        },
        "solve": { "horizon": { "finite": 10 } },
        "simulate": { "runs": 100, "seed": 3 }
    }"#;

    #[test]
    fn parses_and_resolves() {
        let cfg = PipelineConfig::from_json(SMALL).unwrap();
        let r = cfg.abstraction.resolve(&cfg.system.dynamics).unwrap();
        assert_eq!(r.grid.counts, vec![4, 2, 4, 4]);
        assert_eq!(r.grid.periodic, vec![false, false, true, false]);
        assert_eq!(r.actions.inputs().len(), 9);
        assert_eq!(r.options.prune_sigmas, 6.0);
        assert_eq!(cfg.simulation_horizon(), 10);
        assert_eq!(cfg.spec().horizon, Horizon::Finite(10));
    }

    #[test]
    fn rejects_unknown_and_missing_fields() {
        let typo = SMALL.replace("\"cells\"", "\"cell\"");
        assert!(PipelineConfig::from_json(&typo).is_err());
        let cfg = PipelineConfig::from_json(&SMALL.replace("\"theta\": 4, ", "")).unwrap();
        assert!(cfg.abstraction.resolve(&cfg.system.dynamics).is_err());
        let cfg = PipelineConfig::from_json(&SMALL.replace("\"x\": [0, 4]", "\"z\": [0, 4]")).unwrap();
        assert!(cfg.abstraction.resolve(&cfg.system.dynamics).is_err());
    }
}
