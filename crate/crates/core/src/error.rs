use thiserror::Error;

use crate::model::ValidationReport;
use crate::pasr::PasrReport;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid model: {0}")]
    Invalid(ValidationReport),
    #[error("unknown {kind} id {id}")]
    UnknownId { kind: &'static str, id: usize },
    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },
    #[error("policy or adversary does not cover horizon {requested}")]
    HorizonMismatch { requested: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Error)]
pub enum PasrError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("models do not share a label alphabet")]
    AlphabetMismatch,
    #[error("relation is not single-valued at left state {0}")]
    NotSingleValued(usize),
    #[error("relation does not match the model sizes")]
    RelationShape,
    #[error("disturbance set of model {0} is not a singleton")]
    NotAnMdp(u8),
    #[error("label `{0}` not in alphabet")]
    UnknownLabel(String),
    #[error("relation is not a probabilistic alternating simulation")]
    NotPasr(Box<PasrReport>),
    #[error("interface cell ({x1}, {x2}, {u2}) is empty")]
    EmptyInterface { x1: usize, x2: usize, u2: usize },
}

#[derive(Debug, Error)]
pub enum ImdpError {
    #[error("invalid interval MDP: {0}")]
    Invalid(String),
    #[error("infeasible interval row: {0}")]
    InfeasibleRow(String),
    #[error("label `{0}` not in alphabet")]
    UnknownLabel(String),
    #[error("policy selects unavailable action {action} in state {state}")]
    UnavailableAction { state: usize, action: u32 },
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("input {name} = {value} outside [{lo}, {hi}]")]
    InputOutOfBounds { name: &'static str, value: f64, lo: f64, hi: f64 },
    #[error("heading interval wider than 2π: [{0}, {1}]")]
    HeadingTooWide(f64, f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Error)]
pub enum AbstractionError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Imdp(#[from] ImdpError),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("{region} box {index} is not aligned with the grid: boundary {value} in dimension {dim} cuts cell {cell}")]
    MisalignedGeometry { region: &'static str, index: usize, dim: usize, value: f64, cell: usize },
    #[error("invalid interval arguments: {0}")]
    InvalidInterval(String),
    #[error("infeasible row for cell {cell}, action {action}: {detail}")]
    InfeasibleRow { cell: usize, action: usize, detail: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("policy does not cover cell {0}")]
    UncoveredCell(usize),
    #[error("cell {cell} uses action {action}, which has no input vector")]
    UnknownAction { cell: usize, action: u32 },
    #[error("invalid simulation setup: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
