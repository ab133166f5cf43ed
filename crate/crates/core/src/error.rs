use thiserror::Error;

/// Errors raised by the inference and learning routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("covariance matrix is not positive definite: {0}")]
    SingularCovariance(String),

    #[error("statistic chi1 is singular")]
    SingularStatistics,

    #[error("posterior scale matrix is not positive definite ({0})")]
    DegeneratePosterior(String),

    #[error("forgetting factor {0} is outside (0, 1]")]
    InvalidForgettingFactor(f64),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("particle collapse at t = {t}: {reason}")]
    ParticleCollapse { t: usize, reason: String },

    #[error("ancestor weights are all zero at t = {t}")]
    AncestorDegeneracy { t: usize },

    #[error("reference statistics bookkeeping failed: {0}")]
    ReferenceBookkeeping(String),

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("function grid is empty")]
    EmptyGrid,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_check(ok: bool, what: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension(what()))
    }
}
