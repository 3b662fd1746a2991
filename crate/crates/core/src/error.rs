use thiserror::Error;

/// Error type shared by every solver stage.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad parameter values, inconsistent grids, etc.
    #[error("configuration error: {0}")]
    Config(String),

    /// A quantity left the mathematical domain of an operation
    /// (e.g. a non-positive argument to the inverse Kirchhoff map).
    #[error("domain error: {0}")]
    Domain(String),

    /// A scenario file could not be read or decoded.
    #[error("scenario error ({path}): {message}")]
    Scenario { path: String, message: String },

    /// An output file could not be written.
    #[error("output error ({path}): {message}")]
    Output { path: String, message: String },

    /// The local interpolation matrix of a node is numerically singular.
    #[error("influence domain of node {node} is ill-conditioned (cond = {cond:.3e})")]
    IllConditioned { node: usize, cond: f64 },

    /// The global sparse solve failed or did not meet the residual contract.
    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    /// The nonlinear iteration hit its cap before reaching the tolerance.
    #[error(
        "fixed-point iteration did not converge at t = {time}: \
         delta = {delta:.3e} after {iterations} iterations"
    )]
    NonConvergence {
        time: f64,
        delta: f64,
        iterations: usize,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
