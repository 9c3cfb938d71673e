//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("duplicate subsystem name `{0}`")]
    DuplicateSubsystem(String),

    #[error("duplicate node `{0}`")]
    DuplicateNode(String),

    #[error("unknown subsystem `{0}`")]
    UnknownSubsystem(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operands live on different bases")]
    BasisMismatch,

    #[error("zero vector cannot be normalized or used as a spanning vector")]
    ZeroVector,

    #[error("projectors do not commute (max |[P, Q]| = {0:e})")]
    NonCommuting(f64),

    #[error("invalid probability vector for `{name}`: {reason}")]
    InvalidDistribution { name: String, reason: String },

    #[error("invalid constraint system: {0}")]
    InvalidSystem(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid energies: {0}")]
    InvalidEnergies(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("gate `{gate}` is not reversible: {reason}")]
    NotReversible { gate: String, reason: String },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("inconsistent assignment at node `{0}`")]
    Inconsistent(String),

    #[error("node `{0}` is not determined by the given assignment")]
    Underdetermined(String),

    #[error("oracle limit exceeded: {free} free inputs (max {max})")]
    OracleLimit { free: usize, max: usize },

    #[error("dual construction mismatch in {what}: deviation {deviation:e}")]
    ConstructionMismatch { what: String, deviation: f64 },
}
