use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("argument outside its domain: {0}")]
    Domain(String),

    #[error("magnetic field does not reverse: {0}")]
    NoReversal(String),

    #[error("magnetic field vanishes at t = {t:e} s")]
    ZeroField { t: f64 },

    #[error("step size underflow at t = {t:e} s (h = {h:e} s, worst norm drift {worst_norm_drift:e})")]
    StepSizeUnderflow {
        t: f64,
        h: f64,
        worst_norm_drift: f64,
    },

    #[error("stage system is singular at t = {t:e} s")]
    SingularStage { t: f64 },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
