use thiserror::Error;

/// Errors raised by the time-scale calculus, variational checks and solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A time value is not a point of the scale, or lies below its anchor.
    #[error("domain error: {0}")]
    Domain(String),

    /// The scale cannot produce enough forward points.
    #[error("horizon error: {0}")]
    Horizon(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// An operation that needs an affine forward jump was given a scale without one.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("basis error: {0}")]
    Basis(String),

    #[error("solver did not converge after {iterations} iterations (best objective {objective:e})")]
    Convergence {
        iterations: usize,
        objective: f64,
        best: Vec<f64>,
    },

    #[error("infeasible initial conditions: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;
