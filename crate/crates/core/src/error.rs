use thiserror::Error;

use crate::scoring::ScoreError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Score(#[from] ScoreError),

    /// A scorer failed while fusing a particular sentence of a corpus.
    #[error("scoring failed for sentence `{id}`: {source}")]
    SentenceScore {
        id: String,
        #[source]
        source: ScoreError,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
