use thiserror::Error;

use crate::moduli::{ModulusReport, Witness};

/// Errors raised by constructions and verifiers.
///
/// Verification *failures* (a hypothesis refuted, an inclusion with nonzero
/// defect) are not errors: they are reported inside certificates. The
/// variants here are rejected inputs and violated preconditions.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("point {point:?} is not on grid `{space}`")]
    OffGrid { space: String, point: Vec<f64> },

    #[error("grid `{space}` has duplicate points at indices {first} and {second}")]
    DuplicatePoint { space: String, first: usize, second: usize },

    #[error("difference {y:?} - {z:?} is not on grid `{space}`")]
    OffGridDifference { space: String, y: Vec<f64>, z: Vec<f64> },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("formula error: {0}")]
    Formula(String),

    /// A supplied constant that an operation relies on is refuted on the
    /// grid; the estimator bracket and the refuting tuple are attached.
    #[error("hypothesis `{name}` refuted for constant {constant}")]
    Refuted { name: String, constant: f64, report: Box<ModulusReport>, witness: Box<Witness> },
}

pub type Result<T> = std::result::Result<T, Error>;
