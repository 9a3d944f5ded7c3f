use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),

    #[error("grid construction failed: {0}")]
    GridConstruction(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("record {index}: field `{field}`: {message}")]
    Parse {
        index: usize,
        field: String,
        message: String,
    },

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(String),

    #[error("grid level mismatch: checkpoint uses level {checkpoint}, configuration requests level {config}")]
    GridMismatch { checkpoint: u32, config: u32 },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code for the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "E_INVALID_INPUT",
            Error::InvalidParameter(_) => "E_INVALID_PARAMETER",
            Error::InsufficientData(_) => "E_INSUFFICIENT_DATA",
            Error::InvalidHistogram(_) => "E_INVALID_HISTOGRAM",
            Error::GridConstruction(_) => "E_GRID",
            Error::DimensionMismatch { .. } => "E_DIMENSION",
            Error::Parse { .. } => "E_PARSE",
            Error::UnknownMethod(_) => "E_UNKNOWN_METHOD",
            Error::MissingCheckpoint(_) => "E_MISSING_CHECKPOINT",
            Error::GridMismatch { .. } => "E_GRID_MISMATCH",
            Error::Io(_) => "E_IO",
            Error::Json(_) => "E_JSON",
        }
    }

    pub(crate) fn parse(index: usize, field: &str, message: impl Into<String>) -> Self {
        Error::Parse {
            index,
            field: field.to_string(),
            message: message.into(),
        }
    }
}
