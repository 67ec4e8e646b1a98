use thiserror::Error;

use crate::expr::ExprError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Expr(#[from] ExprError),

    #[error("no equilibrium found on [{lo}, {hi}] mV even after widening")]
    WindowTooNarrow { lo: f64, hi: f64 },

    #[error("no root of the defining equation on the voltage window")]
    NoRoot,

    #[error("g_M formulas disagree at V = {v}: {first} vs {second}")]
    InconsistentGm { v: f64, first: f64, second: f64 },

    #[error("Jacobian does not have a double-zero eigenvalue (smallest moduli {smallest:?})")]
    NotDoubleZero { smallest: [f64; 2] },

    #[error("bordered system for h20 is singular")]
    SingularBorderedSystem,

    #[error("step size underflow at t = {t} ms")]
    StepSizeUnderflow { t: f64 },

    #[error("neurons are not phase locked (periods {t1} and {t2} ms)")]
    NotLocked { t1: f64, t2: f64 },

    #[error("neuron is not firing")]
    NotFiring,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for failures caused by bad input rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Expr(_) | Error::Json(_))
    }
}
