use thiserror::Error;

/// Errors raised by the synthesis toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("model error: {0}")]
    Model(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("infeasible in {stage} stage: {detail}")]
    Infeasible { stage: &'static str, detail: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("export refused: {0}")]
    Export(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn infeasible(stage: &'static str, detail: impl Into<String>) -> Self {
        Error::Infeasible {
            stage,
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
