use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{key}`: {reason}")]
    Invalid { key: String, reason: String },

    #[error("matrix `{key}` is singular or ill-conditioned (condition number {condition:e})")]
    Singular { key: String, condition: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("admissibility violated at t={t}: X={x} does not exceed floor {floor}")]
    Admissibility { t: f64, x: f64, floor: f64 },

    #[error("state `{state}` became non-finite at t={t}")]
    BlowUp { state: &'static str, t: f64 },

    #[error("grid of step {dt} straddles schedule breakpoint {breakpoint}")]
    GridMismatch { breakpoint: f64, dt: f64 },

    #[error("concavity degenerate: second derivative {0} is not negative")]
    Degenerate(f64),

    #[error("replay noise: {0}")]
    Replay(String),
}

impl Error {
    pub(crate) fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
