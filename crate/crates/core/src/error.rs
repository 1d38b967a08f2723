use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("field degree {0} outside supported range 1..=8")]
    FieldDegree(u32),

    #[error("operation requires a field of even degree, got 2^{0}")]
    OddDegree(u32),

    #[error("invalid incidence structure: {0}")]
    Incidence(String),

    #[error("design check failed: {0}")]
    Design(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("verification failed [{stage}]: {detail}")]
    Verification { stage: String, detail: String },

    #[error("unsupported order {0} (even orders 2..=8 only)")]
    UnsupportedOrder(usize),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed input: {0}")]
    Parse(#[from] serde_json::Error),
}

impl Error {
    pub fn verification(stage: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Verification {
            stage: stage.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
