use std::path::PathBuf;

use recomp_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{0}")]
    Invalid(String),
    #[error("pitch {0} is not in the tone vocabulary")]
    PitchNotInVocab(u8),
    #[error("unknown chord label {label:?}; vocabulary: {vocab}")]
    UnknownChord { label: String, vocab: String },
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt file at byte offset {offset}: {detail}")]
    Corrupt { offset: usize, detail: String },
    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("checkpoint holds a {found} model, expected {expected}")]
    ModelKind { found: String, expected: String },
    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: u64, detail: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Tensor(_) => "tensor",
            Error::Invalid(_) => "invalid",
            Error::PitchNotInVocab(_) => "pitch-not-in-vocab",
            Error::UnknownChord { .. } => "unknown-chord",
            Error::VocabMismatch(_) => "vocab-mismatch",
            Error::Io { .. } => "io",
            Error::Corrupt { .. } => "corrupt",
            Error::UnsupportedVersion { .. } => "unsupported-version",
            Error::ModelKind { .. } => "model-kind",
            Error::Diverged { .. } => "diverged",
        }
    }
}
