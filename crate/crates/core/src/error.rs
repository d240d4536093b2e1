use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// Non-finite numbers, out-of-range times, malformed grids.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A physical consistency condition of a protocol does not hold
    /// (pi-pulse area, sensing resonance, step-accuracy guard).
    #[error("physical precondition violated ({condition}): {detail}")]
    Precondition {
        condition: &'static str,
        detail: String,
    },

    #[error("not implemented: {0}")]
    NotImplemented(String),

    /// The oscillation fit found no usable spectral peak or did not converge.
    /// `spectrum` holds `(angular_frequency, power)` pairs of the periodogram.
    #[error("fit failed: {reason}")]
    FitFailed {
        reason: String,
        spectrum: Vec<(f64, f64)>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn precondition(condition: &'static str, detail: impl Into<String>) -> Error {
    Error::Precondition {
        condition,
        detail: detail.into(),
    }
}
