use thiserror::Error;

use crate::walker::Simulation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("structural graph error: {0}")]
    StructuralGraph(String),

    #[error("weight configuration is missing edge {0}")]
    IncompleteConfig(usize),

    #[error("probe radius {probe} is too small: {reason}")]
    ProbeRadiusTooSmall { probe: usize, reason: String },

    #[error("network is not connected: {0}")]
    Connectivity(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("internal consistency violated: {0}")]
    InternalConsistency(String),

    #[error("walk was not absorbed within {max_steps} steps")]
    AbsorptionFailure { max_steps: usize },

    #[error("schedule exhausted at step {step} (length {len})")]
    ScheduleLength { step: usize, len: usize },

    #[error("degenerate voltage: 1 - v = {gap:e} at a non-origin vertex")]
    DegenerateVoltage { gap: f64 },

    #[error("environment branching cannot be enumerated: {0}")]
    OracleUnsupported(String),

    #[error("exact enumeration exceeded the cap of {cap} atoms")]
    AtomCapExceeded { cap: usize },

    #[error("ball of radius {radius} exceeds {limit} vertices")]
    BallTooLarge { radius: usize, limit: usize },

    #[error("walk left the maximal working ball of radius {max_radius}")]
    TruncationExceeded {
        max_radius: usize,
        partial: Box<Simulation>,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
