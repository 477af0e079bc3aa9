use std::path::PathBuf;

/// Errors produced while loading artifacts or running the decoding pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("frame {frame}: log-probabilities sum to {logsumexp:.6} in log space, expected 0")]
    Normalization { frame: usize, logsumexp: f64 },

    #[error("invalid posterior matrix: {0}")]
    InvalidPosterior(String),

    #[error("word {word:?} cannot be segmented into subword units")]
    UnsegmentableWord { word: String },

    #[error("bias term {term:?}: {source}")]
    BiasTerm {
        term: String,
        #[source]
        source: Box<Error>,
    },

    #[error("error-pair corpus is empty")]
    EmptyCorpus,

    #[error("utterance {id:?} has no matching entry on the other side")]
    MissingUtterance { id: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
