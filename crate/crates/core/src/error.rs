use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("duplicate uri `{0}`")]
    DuplicateUri(String),

    #[error("unknown uri `{0}`")]
    UnknownUri(String),

    #[error("record `{0}` has no attributes to serialize")]
    EmptyRecord(String),

    #[error("coordinate out of range: lat {lat}, lon {lon}")]
    Coordinate { lat: f64, lon: f64 },

    #[error("not enough {class} pairs: requested {requested}, available {available} (short by {})", requested - available)]
    InsufficientClass { class: &'static str, requested: usize, available: usize },

    #[error("key mismatch between predictions and truth: {missing_in_predictions} missing from predictions, {missing_in_truth} missing from truth (first: {first})")]
    KeyMismatch { missing_in_predictions: usize, missing_in_truth: usize, first: String },

    #[error("LLM transport failure: {0}")]
    Transport(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn is_transport(&self) -> bool {
        matches!(self, Error::Transport(_))
    }
}
