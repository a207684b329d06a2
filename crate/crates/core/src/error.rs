use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// One violated scalar constraint of a quadratic program.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Index of the constraint in the program's constraint list.
    pub constraint: usize,
    pub description: String,
    pub magnitude: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "constraint #{} ({}) violated by {:.3e}",
            self.constraint, self.description, self.magnitude
        )
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid constraint combination: {0}")]
    InvalidCombination(String),

    #[error("infeasible candidate: {}", join_violations(.0))]
    Infeasible(Vec<Violation>),

    #[error("rank-one extraction failed: eigenvalue ratio lambda2/lambda1 = {ratio:.3e} exceeds tolerance {tol:.1e}")]
    Extraction { ratio: f64, tol: f64 },

    #[error("solver did not reach optimality: {0}")]
    Solver(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
