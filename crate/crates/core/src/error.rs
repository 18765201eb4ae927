use thiserror::Error;

pub type Result<T, E = GeoError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid point{}: {reason}", .index.map(|i| format!(" at row {i}")).unwrap_or_default())]
    Validation {
        index: Option<usize>,
        reason: String,
    },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("mean did not converge after {iterations} iterations (last step {last_step:e})")]
    Convergence { iterations: usize, last_step: f64 },

    #[error("boosting round {iteration}: {source}")]
    Round {
        iteration: usize,
        #[source]
        source: Box<GeoError>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("model space {model} does not match requested space {requested}")]
    SpaceMismatch { model: String, requested: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GeoError {
    pub(crate) fn invalid(reason: impl Into<String>) -> Self {
        GeoError::Validation {
            index: None,
            reason: reason.into(),
        }
    }

    /// Attaches a row index to a validation error.
    pub fn at_row(self, row: usize) -> Self {
        match self {
            GeoError::Validation { reason, .. } => GeoError::Validation {
                index: Some(row),
                reason,
            },
            other => other,
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(GeoError::DimensionMismatch { expected, found })
    }
}
