use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("value out of range for `{key}`: {reason}")]
    Range { key: String, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("model misconfigured: {0}")]
    Misconfigured(String),

    #[error("structural hypothesis violated: {what} residual {residual:.3e} exceeds {threshold:.1e}")]
    Structural {
        what: &'static str,
        residual: f64,
        threshold: f64,
    },

    #[error("trajectory diverged at t = {time}: norm {norm:.3e}")]
    Divergence { time: f64, norm: f64 },

    #[error("contraction precondition violated: L = {lipschitz:.4} >= 1, admissible horizon < {max_horizon:.6}")]
    NotContractive { lipschitz: f64, max_horizon: f64 },

    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    IterationLimit { iterations: usize, residual: f64 },

    #[error("smallness condition violated: C_B*|f|/alpha^2 = {ratio:.4} >= 1")]
    Smallness { ratio: f64 },

    #[error("invalid decomposition: mean envelope {value:.3e} at t = {time} exceeds {tol:.1e}")]
    Decomposition { time: f64, value: f64, tol: f64 },

    #[error("operation requires a linear model (B = 0)")]
    NotLinear,

    #[error("empty set passed to {0}")]
    EmptySet(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } => 3,
            Error::Config(_) | Error::Range { .. } | Error::DimensionMismatch { .. } => 2,
            Error::Misconfigured(_) | Error::Precondition(_) | Error::Smallness { .. } => 2,
            Error::NotContractive { .. } | Error::NotLinear => 2,
            Error::Io(_) => 2,
            Error::Structural { .. }
            | Error::IterationLimit { .. }
            | Error::Decomposition { .. }
            | Error::EmptySet(_) => 1,
        }
    }
}
