use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure in {op}: {detail}")]
    NumericFailure {
        op: &'static str,
        detail: String,
        /// Residual or error estimate at the point of failure, when one exists.
        residual: Option<f64>,
    },

    #[error("construction failed at level k = {level}: {detail}")]
    ConstructionFailure { level: usize, detail: String },

    #[error("histogram grid too small for probe {probe}: overflow fraction {overflow:.4} exceeds 1%")]
    GridTooSmall { probe: String, overflow: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

pub(crate) fn numeric<T>(op: &'static str, detail: impl Into<String>, residual: Option<f64>) -> Result<T> {
    Err(Error::NumericFailure {
        op,
        detail: detail.into(),
        residual,
    })
}

pub(crate) fn ensure_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        invalid(format!("{name} must be finite"))
    }
}
