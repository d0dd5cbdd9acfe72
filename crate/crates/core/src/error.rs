use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported format_version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },
    #[error("unknown node id {0}")]
    UnknownNode(u32),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("scene generation failed: {0}")]
    Generation(String),
    #[error("insufficient training data: {0}")]
    InsufficientData(String),
    #[error("no training data for label pair {{{0}, {1}}}")]
    MissingLabelPair(u8, u8),
    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("lexicon has no surface form for {0}")]
    Lexicon(String),
    #[error("unknown responder policy {0:?}")]
    UnknownPolicy(String),
    #[error("{0}")]
    Precondition(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category used in CLI diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Json(_) => "parse",
            Error::FormatVersion { .. } => "format-version",
            Error::UnknownNode(_) => "unknown-node",
            Error::InvalidScene(_) => "invalid-scene",
            Error::InvalidConfig(_) => "invalid-config",
            Error::InvalidBox(_) => "invalid-bbox",
            Error::Generation(_) => "generation",
            Error::InsufficientData(_) => "insufficient-data",
            Error::MissingLabelPair(..) => "missing-label-pair",
            Error::VocabularyMismatch(_) => "vocabulary-mismatch",
            Error::Empty(_) => "empty-input",
            Error::Lexicon(_) => "lexicon",
            Error::UnknownPolicy(_) => "unknown-policy",
            Error::Precondition(_) => "precondition",
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
