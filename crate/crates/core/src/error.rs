use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus is empty after ingestion and filtering")]
    EmptyCorpus,

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("all KDE weights are zero")]
    ZeroWeights,

    #[error("document {doc_id} is dated after the query time ({doc_time} > {query_time})")]
    FutureDocument {
        doc_id: String,
        doc_time: i64,
        query_time: i64,
    },

    #[error("histogram binning mismatch: {0}")]
    BinningMismatch(String),

    #[error("no vertical returned any document for query {0}")]
    EmptySelection(String),

    #[error("no feedback documents available: {0}")]
    EmptyFeedback(String),

    #[error("feature arity mismatch: model has {expected}, vector has {found}")]
    ArityMismatch { expected: usize, found: usize },

    #[error("no relevant documents in training data")]
    NoRelevant,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
