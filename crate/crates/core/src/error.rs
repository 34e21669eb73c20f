use thiserror::Error;

use crate::team::{AgentId, CellId, ValidationReport};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("scenario document: {0}")]
    Schema(String),

    #[error("invalid team configuration:\n{0}")]
    InvalidTeam(ValidationReport),

    #[error("core must be at origin (agent {0} has a nonzero material position)")]
    CoreNotAtOrigin(AgentId),

    #[error("duplicate agent id {0}")]
    DuplicateAgent(AgentId),

    #[error("layer {0} is empty")]
    EmptyLayer(usize),

    #[error("point outside leading polygon")]
    OutsidePolygon,

    #[error("cell {0} is degenerate (collinear vertices)")]
    DegenerateCell(CellId),

    #[error("cell {0} has fewer than 2 members")]
    TooFewMembers(CellId),

    #[error("coincident agents {0} and {1} in cell {2}")]
    CoincidentAgents(AgentId, AgentId, CellId),

    #[error("unknown cell {0}")]
    UnknownCell(CellId),

    #[error("weights not row-stochastic: layer {layer}, row {row} sums to {sum}")]
    NotRowStochastic { layer: usize, row: usize, sum: f64 },

    #[error("weights invalid: {0}")]
    InvalidWeights(String),

    #[error("agent {agent} in layer {layer}: enclosing vertex {vertex} is not in the previous layer")]
    VertexNotInPreviousLayer { agent: AgentId, layer: usize, vertex: AgentId },

    #[error("alpha vector has {got} entries, expected {expected}")]
    AlphaLength { expected: usize, got: usize },

    #[error("infeasible bounds: alpha_min {min} > alpha_max {max}")]
    InfeasibleBounds { min: f64, max: f64 },

    #[error("safety window empty - no feasible deformation: alpha_min {alpha_min} > alpha_max {alpha_max}")]
    EmptySafetyWindow { alpha_min: f64, alpha_max: f64 },

    #[error("zeta must be positive (got {0})")]
    NonPositiveZeta(f64),

    #[error("malformed QP: {0}")]
    MalformedProblem(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("QP failed at t = {t}: {source}")]
    ScheduleStep {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("time grid: {0}")]
    TimeGrid(String),

    #[error("nonpositive step dt = {0}")]
    NonPositiveStep(f64),

    #[error("degenerate vertex pair in cell {0}: material vectors are parallel")]
    DegenerateJacobian(CellId),

    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),

    #[error("at least 2 positions required, got {0}")]
    TooFewPositions(usize),

    #[error("controller diverged at step {step} (t = {t}): tracking error {error} m exceeds {limit} m")]
    Diverged { step: usize, t: f64, error: f64, limit: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical pipeline rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical(_) | Error::Diverged { .. } => true,
            Error::ScheduleStep { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
