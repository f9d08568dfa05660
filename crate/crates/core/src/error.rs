use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("validation error at line {line}: {message}")]
    Validation { line: usize, message: String },

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("duplicate knowledge-base id `{0}`")]
    DuplicateId(String),

    #[error(
        "knowledge-base entry `{0}` has type Date; date values are open-ended and cannot be \
         enumerated in a pre-constructed knowledge base"
    )]
    DateInKb(String),

    #[error("corpus generation failed: {0}")]
    Generation(String),

    #[error("empty token sequence")]
    EmptySequence,

    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },

    #[error("NaN gradient in parameter `{0}`")]
    NanGradient(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("shape mismatch for `{name}`: expected {expected:?}, found {found:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("unknown topic `{0}`")]
    UnknownTopic(String),

    #[error("unknown report field `{0}`")]
    UnknownField(String),

    #[error("field `{0}` is not supported by the retrieval baseline (Date values are not in the knowledge base)")]
    UnsupportedField(String),

    #[error("utterance index {index} is not greater than last processed index {last}")]
    OutOfOrder { index: u64, last: u64 },

    #[error("unknown session `{0}`")]
    UnknownSession(String),

    #[error("unknown keyword record {0}")]
    UnknownRecord(u64),

    #[error("invalid keyword transition for record {record}: {message}")]
    InvalidTransition { record: u64, message: String },

    #[error("model bundle is missing section `{0}`")]
    MissingSection(String),

    #[error("version mismatch: {0}")]
    VersionMismatch(String),

    #[error("train/test overlap: dialogue `{0}` appears in the bundle's training split")]
    SplitOverlap(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn validation(line: usize, message: impl Into<String>) -> Self {
        Error::Validation {
            line,
            message: message.into(),
        }
    }
}
