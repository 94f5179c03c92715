use thiserror::Error;

/// Errors produced by grid construction, tableau validation and parsing, the
/// implicit stage solver, and the time integrator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid tableau: {0}")]
    InvalidTableau(String),

    #[error("tableau parse error: {0}")]
    TableauParse(String),

    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),

    #[error("stage solve failed: {0}")]
    Solver(String),

    #[error("solution diverged at step {step} (t = {t:.6e}): {reason}")]
    Diverged { step: usize, t: f64, reason: String },

    #[error("tableau search did not converge after {attempts} attempts")]
    SearchFailed { attempts: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
