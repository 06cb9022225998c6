use thiserror::Error;

/// Errors raised across the processing chain.
#[derive(Debug, Error)]
pub enum SgaError {
    #[error("geometry: {0}")]
    Geometry(String),

    #[error("imaging frame cannot be constructed: {0}")]
    FrameConstruction(String),

    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("processing order violated: {0}")]
    Ordering(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("metric extraction: {0}")]
    Metric(String),

    #[error("format: {0}")]
    Format(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image encoding: {0}")]
    Image(#[from] image::ImageError),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<SgaError>,
    },
}

impl SgaError {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        SgaError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        match self {
            SgaError::Validation { .. } => true,
            SgaError::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    /// Tags the error with the pipeline stage it came from; an existing tag is kept.
    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            e @ SgaError::Stage { .. } => e,
            e => SgaError::Stage {
                stage: stage.to_string(),
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, SgaError>;
