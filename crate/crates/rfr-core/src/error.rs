use std::fmt;

use crate::model::Violation;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the library.
#[derive(Debug, Clone)]
pub enum Error {
    /// A network document could not be decoded; names the offending field.
    Parse(String),
    /// A network violates structural invariants.
    Invalid(Vec<Violation>),
    /// A square system has a pivot below the singularity threshold.
    Singular { context: String, pivot: f64 },
    /// An LP subproblem failed in a way the caller cannot interpret.
    Lp(String),
    /// An operation that requires a nonempty region met an empty one.
    EmptyRegion(String),
    /// A parameter vector lies outside its uncertainty box.
    OutOfBox {
        param: String,
        value: f64,
        min: f64,
        max: f64,
    },
    /// Mismatched dimensions between caller-supplied objects.
    Dimension(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
            Error::Invalid(violations) => {
                write!(f, "invalid network ({} violations):", violations.len())?;
                for v in violations {
                    write!(f, "\n  - {v}")?;
                }
                Ok(())
            }
            Error::Singular { context, pivot } => {
                write!(f, "singular matrix in {context} (pivot {pivot:.3e})")
            }
            Error::Lp(msg) => write!(f, "LP failure: {msg}"),
            Error::EmptyRegion(msg) => write!(f, "empty region: {msg}"),
            Error::OutOfBox {
                param,
                value,
                min,
                max,
            } => write!(
                f,
                "parameter {param} = {value} outside its box [{min}, {max}]"
            ),
            Error::Dimension(msg) => write!(f, "dimension mismatch: {msg}"),
        }
    }
}

impl std::error::Error for Error {}
