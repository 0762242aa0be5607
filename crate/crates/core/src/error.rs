use thiserror::Error;

pub type Result<T> = std::result::Result<T, ArmlabError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArmlabError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("κ = {kappa} is outside the regime required by {what}")]
    Regime { kappa: f64, what: String },
    #[error("step failure at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },
    #[error("point {0} is outside the domain of the map")]
    OutsideDomain(String),
    #[error("Newton inversion did not converge: {0}")]
    NoConvergence(String),
    #[error("fit needs at least 3 grid points with hits, got {0}")]
    InsufficientData(usize),
    #[error("io: {0}")]
    Io(String),
}

impl ArmlabError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        ArmlabError::InvalidParameter(msg.into())
    }
}

impl From<std::io::Error> for ArmlabError {
    fn from(e: std::io::Error) -> Self {
        ArmlabError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for ArmlabError {
    fn from(e: serde_json::Error) -> Self {
        ArmlabError::Io(e.to_string())
    }
}
