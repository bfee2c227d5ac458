use thiserror::Error;

pub type Result<T> = std::result::Result<T, MslsError>;

#[derive(Debug, Error)]
pub enum MslsError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("ingestion: {0}")]
    Ingestion(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("numerical: {0}")]
    Numerical(String),
    #[error("too many terms: {count} multi-indices exceed the limit of {limit}")]
    TooManyTerms { count: f64, limit: f64 },
    #[error("initialization: {0}")]
    Initialization(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl MslsError {
    /// Short stable tag used by front ends to prefix messages.
    pub fn kind(&self) -> &'static str {
        match self {
            MslsError::Validation(_) => "validation",
            MslsError::Ingestion(_) => "ingestion",
            MslsError::Degenerate(_) => "degenerate",
            MslsError::Numerical(_) => "numerical",
            MslsError::TooManyTerms { .. } => "too-many-terms",
            MslsError::Initialization(_) => "initialization",
            MslsError::Io(_) => "io",
            MslsError::Csv(_) => "csv",
            MslsError::Json(_) => "json",
        }
    }
}

pub(crate) fn validation<T>(msg: impl Into<String>) -> Result<T> {
    Err(MslsError::Validation(msg.into()))
}
