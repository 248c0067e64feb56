use thiserror::Error;

/// Errors raised anywhere in the engine.
///
/// Each variant maps onto one error kind of the public API; see
/// [`Error::kind`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parse error at offset {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("solver did not converge: {0}")]
    Convergence(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("no sign change on [{lo}, {hi}] (g(lo) = {g_lo}, g(hi) = {g_hi})")]
    Bracket {
        lo: f64,
        hi: f64,
        g_lo: f64,
        g_hi: f64,
    },

    #[error("ambiguous inversion: {0}")]
    Ambiguity(String),

    #[error("utility is not increasing along the ray: {0}")]
    Monotonicity(String),

    #[error("no path from {from} to {to}")]
    NoPath { from: String, to: String },

    #[error("no analytic oracle for {0}")]
    NoOracle(String),

    #[error("invalid family parameters: {0}")]
    Param(String),

    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl Error {
    /// Stable machine-readable name used in error envelopes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "ParseError",
            Error::Domain(_) => "DomainError",
            Error::Convergence(_) => "ConvergenceError",
            Error::Infeasible(_) => "InfeasibleError",
            Error::Bracket { .. } => "BracketError",
            Error::Ambiguity(_) => "AmbiguityError",
            Error::Monotonicity(_) => "MonotonicityError",
            Error::NoPath { .. } => "NoPathError",
            Error::NoOracle(_) => "NoOracleError",
            Error::Param(_) => "ParamError",
            Error::Invalid(_) => "InvalidArgument",
        }
    }

    pub fn position(&self) -> Option<usize> {
        match self {
            Error::Parse { position, .. } => Some(*position),
            _ => None,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
