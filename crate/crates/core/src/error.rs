use thiserror::Error;

use crate::phase::Phase;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Riccati iteration did not converge in {iterations} iterations (relative change {residual:e})")]
    RiccatiNotConverged { iterations: usize, residual: f64 },

    /// The quadratic value function has cross terms (r1·r2 or u1·u2) that the
    /// eight-monomial feature set cannot represent.
    #[error("value function not representable by the feature set (off-diagonal magnitude {offdiag:e})")]
    NotRepresentable { offdiag: f64 },

    #[error("degenerate maximiser: theta3 = {theta3}, theta4 = {theta4} (both must be negative)")]
    DegeneratePolicy { theta3: f64, theta4: f64 },

    #[error("ill-conditioned demonstrations: condition number {condition:e}")]
    IllConditioned { condition: f64 },

    #[error("no keyframe set passed the conditioning guard in {attempts} attempts (best condition {best:e})")]
    ResampleExhausted { attempts: usize, best: f64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("rank-deficient design matrix")]
    RankDeficient,

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("phase {phase}: {source}")]
    Phase {
        phase: Phase,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub fn in_phase(self, phase: Phase) -> Self {
        Error::Phase {
            phase,
            source: Box::new(self),
        }
    }

    /// Strips `Context`/`Phase` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } | Error::Phase { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures caused by the numbers (conditioning, admissibility,
    /// convergence) rather than by configuration or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::RiccatiNotConverged { .. }
                | Error::NotRepresentable { .. }
                | Error::DegeneratePolicy { .. }
                | Error::IllConditioned { .. }
                | Error::ResampleExhausted { .. }
                | Error::RankDeficient
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
