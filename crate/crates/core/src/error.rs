use std::io;

use thiserror::Error;

/// Errors produced by the design, simulation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("lattice extent too small: {0}")]
    ExtentTooSmall(String),

    #[error("domain too small: {0}")]
    DomainTooSmall(String),

    #[error("{what} at ({x:.1}, {y:.1}, {z:.1}) nm lies {place}")]
    OutOfDomain {
        what: &'static str,
        x: f64,
        y: f64,
        z: f64,
        place: &'static str,
    },

    #[error("unstable Courant factor {courant} (limit {limit:.6})")]
    UnstableCourant { courant: f64, limit: f64 },

    #[error("field instability at step {step}: {component} = {value} at index {index}")]
    Instability {
        step: u64,
        component: &'static str,
        index: usize,
        value: f64,
    },

    #[error("record too short: {got} samples, need at least {need}")]
    RecordTooShort { got: usize, need: usize },

    #[error("degenerate modes: {0}")]
    DegenerateModes(String),

    #[error("profile is not normalized (max eps|E|^2 = {0})")]
    NotNormalized(f64),

    #[error("division guard: {0}")]
    DivisionGuard(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
