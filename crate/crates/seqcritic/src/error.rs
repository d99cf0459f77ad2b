use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeqError {
    #[error(transparent)]
    Num(#[from] numcore::NumError),
    #[error("unknown token id {id} for vocabulary of size {size}")]
    UnknownTokenId { id: usize, size: usize },
    #[error("unknown token `{0}` and the vocabulary has no unknown-token entry")]
    UnknownToken(String),
    #[error("vocab: {0}")]
    Vocab(String),
    #[error("data: {0}")]
    Data(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid config:\n{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("oracle: {0}")]
    Oracle(String),
    #[error("eval: {0}")]
    Eval(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SeqError {
    /// True for errors raised by the divergence guard during training.
    pub fn is_divergence(&self) -> bool {
        matches!(self, SeqError::Divergence(_))
    }
}

pub type Result<T> = std::result::Result<T, SeqError>;
