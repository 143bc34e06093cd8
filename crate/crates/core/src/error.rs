use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A constitutive function was evaluated outside its domain.
    #[error("domain error in {func}: {detail}")]
    Domain { func: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Explicit convection would lose positivity with the requested step.
    #[error("step size {h} violates the upwind CFL bound (ratio {ratio:.3}); try h <= {suggested:.3e}")]
    StepSize { h: f64, ratio: f64, suggested: f64 },

    /// Upstream positivity or factorization invariant broken.
    #[error("state error: {0}")]
    State(String),

    #[error("Newton solver failed after {iterations} iterations, max residual {residual:.3e}")]
    Solver { iterations: usize, residual: f64 },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(func: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            func,
            detail: detail.into(),
        }
    }
}
