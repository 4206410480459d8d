use thiserror::Error;

/// Errors produced by the chorus localization library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),

    #[error(
        "no separation distance reaches probability {target_prob} (best achievable {best:.6})"
    )]
    Unsatisfiable { target_prob: f64, best: f64 },

    #[error("unsupported concurrent target count {0} (expected 2..=7)")]
    UnsupportedTargetCount(usize),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(value: f64, what: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{what} must be finite, got {value}"
        )))
    }
}
