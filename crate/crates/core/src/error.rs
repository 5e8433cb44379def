use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input failed a precondition. `field` names the offending parameter.
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("eigenvalue gap collapsed: |lambda1| = {lambda1}, |lambda2| = {lambda2}")]
    GapCollapse { lambda1: f64, lambda2: f64 },

    #[error("factorization failed at jitter {jitter:e}; smallest eigenvalue estimate {min_eigenvalue:e}")]
    Factorization { jitter: f64, min_eigenvalue: f64 },

    #[error("bracket construction infeasible: budget {budget} below minimal feasible budget {minimal_budget}")]
    InfeasibleBudget { budget: f64, minimal_budget: f64 },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
