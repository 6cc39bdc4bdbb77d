use thiserror::Error;

/// Errors raised by the equilibrium library.
#[derive(Debug, Error)]
pub enum MfgError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("size error: {0}")]
    Size(String),

    /// The grid search of the numeric maximizer could not bracket a maximum.
    /// `profile` holds the utility values sampled on the grid.
    #[error("failed to bracket a maximum of the utility at z={z}, alpha={alpha}")]
    Bracket {
        z: f64,
        alpha: f64,
        profile: Vec<f64>,
    },

    /// Discrete best-response dynamics revisited a profile without settling.
    #[error("discrete best-response cycle of length {length} detected after {steps} steps")]
    Cycle { length: usize, steps: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = MfgError> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(MfgError::Domain(format!("{name} must be finite, got {value}")))
    }
}
