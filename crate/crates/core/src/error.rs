use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("failed to generate a persistently exciting input after {attempts} attempts")]
    GenerationFailed { attempts: usize },

    #[error("empty ensemble: no experiments were aggregated")]
    EmptyEnsemble,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("oracle failure: expected nullity {expected}, computed {found}")]
    OracleFailure { expected: usize, found: usize },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
