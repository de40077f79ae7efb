use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Adaptive quadrature ran out of its evaluation budget.
    #[error("quadrature did not converge on [{lo}, {hi}] after {evaluations} evaluations (relative error {rel_error:.3e})")]
    NonConvergence {
        lo: f64,
        hi: f64,
        evaluations: usize,
        rel_error: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The body has no interior at double precision.
    #[error("degenerate body: {0}")]
    DegenerateSpec(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("rejection sampler accepted {accepted} of {proposals} proposals")]
    RejectionBudgetExceeded { accepted: usize, proposals: usize },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
